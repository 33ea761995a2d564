// Synthetic sequence generation from the sequential sparse model, signal
// measurement, and the MSE / PSNR evaluation metrics.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "ssr/linalg.hpp"
#include "ssr/rng.hpp"
#include "ssr/solvers.hpp"

namespace ssr {

// x_t = A y_t + noise(sigma2), y_t = D h_t, with h_t sparse and D h_t
// linearly predictable from F D h_{t-1}.
struct SequentialModelSpec {
    DenseMatrix A;       // M x N
    DenseMatrix D;       // N x N
    DenseMatrix F;       // N x N
    double sigma2 = 0.0; // observation noise variance
    double nu1 = 1.0;    // sparsity inverse scale; soft threshold is 1/nu1
    double nu2 = 1.0;    // prediction precision; innovation variance is 1/nu2
    std::size_t t_len = 1;
    DenseVector h_init;  // length N
};

inline void validate(const SequentialModelSpec& s) {
    require(s.D.rows == s.D.cols, "SequentialModelSpec: D must be square");
    require(s.F.rows == s.D.rows && s.F.cols == s.D.cols, "SequentialModelSpec: F shape");
    require(s.A.cols == s.D.rows, "SequentialModelSpec: A/D dimension mismatch");
    require(s.h_init.size() == s.D.cols, "SequentialModelSpec: h_init length");
    require(s.sigma2 >= 0.0, "SequentialModelSpec: sigma2 must be nonnegative");
    require(s.nu1 > 0.0 && s.nu2 > 0.0, "SequentialModelSpec: nu1 and nu2 must be positive");
}

struct SequenceSample {
    std::vector<DenseVector> x_seq;  // observations, length M
    std::vector<DenseVector> y_seq;  // signals, length N
    std::vector<DenseVector> h_seq;  // latent codes, kept for diagnostics
};

// Draws one sequence. The exact conditional of the model is intractable, so
// codes are sampled by a sparsifying surrogate: predict linearly, add
// Gaussian innovation of variance 1/nu2, then soft-threshold at 1/nu1. The
// result has the model's qualitative structure (sparse codes, predictable
// signals); recovery correctness never depends on this sampler being exact.
// Draw order per step: N innovation values, then M observation-noise values
// (observation noise is drawn even when sigma2 = 0, scaled by sqrt(sigma2)).
inline SequenceSample sample_sequence(const SequentialModelSpec& spec, std::uint64_t seed) {
    validate(spec);
    SplitMix64 rng(seed);
    const std::size_t n = spec.D.rows;
    const std::size_t m = spec.A.rows;
    const DenseMatrix predict = matmul(matmul(transpose(spec.D), spec.F), spec.D);
    const double innov_sd = std::sqrt(1.0 / spec.nu2);
    const double noise_sd = std::sqrt(spec.sigma2);
    const double threshold = 1.0 / spec.nu1;

    SequenceSample out;
    DenseVector h_prev = spec.h_init;
    for (std::size_t t = 0; t < spec.t_len; ++t) {
        DenseVector h = matvec(predict, h_prev);
        for (std::size_t i = 0; i < n; ++i) h[i] += innov_sd * rng.next_gaussian();
        h = soft_threshold(h, threshold);
        DenseVector y = matvec(spec.D, h);
        DenseVector x = matvec(spec.A, y);
        for (std::size_t i = 0; i < m; ++i) x[i] += noise_sd * rng.next_gaussian();
        out.x_seq.push_back(std::move(x));
        out.y_seq.push_back(y);
        out.h_seq.push_back(h);
        h_prev = std::move(h);
    }
    return out;
}

// x_t = A y_t + gaussian(0, sigma2), deterministic per seed.
inline std::vector<DenseVector> measure(const std::vector<DenseVector>& y_seq,
                                        const DenseMatrix& a, double sigma2,
                                        std::uint64_t seed) {
    require(sigma2 >= 0.0, "measure: sigma2 must be nonnegative");
    SplitMix64 rng(seed);
    const double noise_sd = std::sqrt(sigma2);
    std::vector<DenseVector> x_seq;
    for (const DenseVector& y : y_seq) {
        DenseVector x = matvec(a, y);
        for (double& v : x) v += noise_sd * rng.next_gaussian();
        x_seq.push_back(std::move(x));
    }
    return x_seq;
}

// Per-element mean squared error over the whole sequence.
inline double mse(const std::vector<DenseVector>& y_hat_seq,
                  const std::vector<DenseVector>& y_seq) {
    require(y_hat_seq.size() == y_seq.size(), "mse: sequence length mismatch");
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < y_seq.size(); ++t) {
        require(y_hat_seq[t].size() == y_seq[t].size(), "mse: vector length mismatch");
        for (std::size_t i = 0; i < y_seq[t].size(); ++i) {
            const double d = y_hat_seq[t][i] - y_seq[t][i];
            acc += d * d;
        }
        count += y_seq[t].size();
    }
    return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

// 10 log10(peak^2 / mse) with the per-element mse above; +infinity when the
// inputs are identical.
inline double psnr(const std::vector<DenseVector>& y_hat_seq,
                   const std::vector<DenseVector>& y_seq, double peak) {
    require(peak > 0.0, "psnr: peak must be positive");
    const double m = mse(y_hat_seq, y_seq);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

}  // namespace ssr
