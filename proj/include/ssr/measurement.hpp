// Random compressive measurement matrices.
#pragma once

#include <cmath>
#include <cstdint>

#include "ssr/linalg.hpp"
#include "ssr/rng.hpp"

namespace ssr {

// M x N matrix with entries +-1/(3 sqrt(M)), each sign a fair coin from
// SplitMix64(seed). Pure function of (m, n, seed): the same arguments always
// reproduce the same matrix bit for bit. The 1/3 scaling keeps ||A D|| below
// 1 for orthogonal D with high probability, so unit step size converges.
inline DenseMatrix sample_measurement_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
    require(m >= 1 && n >= 1, "sample_measurement_matrix: dimensions must be >= 1");
    const double mag = 1.0 / (3.0 * std::sqrt(static_cast<double>(m)));
    SplitMix64 rng(seed);
    DenseMatrix a(m, n);
    for (double& x : a.data) x = rng.next_bool() ? mag : -mag;
    return a;
}

}  // namespace ssr
