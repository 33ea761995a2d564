// Seeded random problem instances for validation commands and tests.
#pragma once

#include <cmath>
#include <cstdint>

#include "ssr/linalg.hpp"
#include "ssr/measurement.hpp"
#include "ssr/rng.hpp"
#include "ssr/solvers.hpp"

namespace ssr {

inline DenseMatrix random_gaussian_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng,
                                          double scale = 1.0) {
    DenseMatrix m(rows, cols);
    for (double& x : m.data) x = scale * rng.next_gaussian();
    return m;
}

inline DenseVector random_gaussian_vector(std::size_t len, SplitMix64& rng, double scale = 1.0) {
    DenseVector v(len);
    for (double& x : v) x = scale * rng.next_gaussian();
    return v;
}

// Random orthogonal matrix: modified Gram-Schmidt on a Gaussian matrix.
inline DenseMatrix random_orthogonal(std::size_t n, SplitMix64& rng) {
    DenseMatrix q = random_gaussian_matrix(n, n, rng);
    // Work on columns.
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < j; ++p) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += q(i, p) * q(i, j);
            for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, p);
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12) {  // essentially impossible for Gaussian draws
            q(j % n, j) += 1.0;
            nrm = 1.0;
        }
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
    }
    return q;
}

struct InstanceRanges {
    double alpha_min = 1.0, alpha_max = 4.0;
    double lambda1_min = 0.01, lambda1_max = 1.0;
    double lambda2_min = 0.01, lambda2_max = 1.0;
};

// A well-scaled random parameter set: measurement-style A (so ||A D|| stays
// near or below 1 for orthogonal D), random orthogonal dictionary, prediction
// matrix shrunk to spectral norm <= 0.9, Gaussian initial code.
inline SistaParams random_sista_params(std::size_t n, std::size_t m, std::uint64_t seed,
                                       const InstanceRanges& r = {}) {
    SplitMix64 rng = derive_stream(seed, 11);
    SistaParams p;
    p.A = sample_measurement_matrix(m, n, rng.next_u64());
    p.D = random_orthogonal(n, rng);
    p.F = random_gaussian_matrix(n, n, rng);
    const double fn = std::sqrt(spectral_norm_sq(p.F));
    if (fn > 0.0) p.F = scale(p.F, 0.9 / fn);
    p.h0 = random_gaussian_vector(n, rng, 0.5);
    p.alpha = r.alpha_min + (r.alpha_max - r.alpha_min) * rng.next_double();
    p.lambda1 = r.lambda1_min + (r.lambda1_max - r.lambda1_min) * rng.next_double();
    p.lambda2 = r.lambda2_min + (r.lambda2_max - r.lambda2_min) * rng.next_double();
    return p;
}

// Variant with a dense, non-orthogonal dictionary (spectral norm ~0.95).
// With an orthogonal D several mapping derivatives vanish identically
// (D^T D = I makes W^(1) independent of lambda2), which would leave gradient
// checks comparing noise against exact zeros; this ensemble exercises every
// term.
inline SistaParams random_sista_params_dense(std::size_t n, std::size_t m, std::uint64_t seed,
                                             const InstanceRanges& r = {}) {
    SistaParams p = random_sista_params(n, m, seed, r);
    SplitMix64 rng = derive_stream(seed, 17);
    p.D = random_gaussian_matrix(n, n, rng);
    const double dn = std::sqrt(spectral_norm_sq(p.D));
    if (dn > 0.0) p.D = scale(p.D, 0.95 / dn);
    return p;
}

inline std::vector<DenseVector> random_observations(std::size_t t_len, std::size_t m,
                                                    std::uint64_t seed) {
    SplitMix64 rng = derive_stream(seed, 12);
    std::vector<DenseVector> x;
    for (std::size_t t = 0; t < t_len; ++t) x.push_back(random_gaussian_vector(m, rng));
    return x;
}

}  // namespace ssr
