// Dense double-precision linear algebra: the value types every other header
// builds on, plus the small set of operations the solvers need.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssr {

using DenseVector = std::vector<double>;

// Row-major dense matrix. Plain aggregate: cheap to copy at the sizes this
// library targets (N <= 1024), immutable-by-convention once built.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline bool all_finite(const DenseVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const DenseMatrix& m) { return all_finite(m.data); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.rows, "matmul: dimension mismatch");
    DenseMatrix out(a.rows, b.cols);
    // i-k-j order: accumulate row by row.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * b.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline DenseVector matvec(const DenseMatrix& a, const DenseVector& x) {
    require(a.cols == x.size(), "matvec: dimension mismatch");
    DenseVector out(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
        out[i] = acc;
    }
    return out;
}

// a^T x without forming the transpose.
inline DenseVector matvec_t(const DenseMatrix& a, const DenseVector& x) {
    require(a.rows == x.size(), "matvec_t: dimension mismatch");
    DenseVector out(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols; ++j) out[j] += arow[j] * xi;
    }
    return out;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "add: shape mismatch");
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "sub: shape mismatch");
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline DenseMatrix scale(const DenseMatrix& a, double s) {
    DenseMatrix out = a;
    for (double& x : out.data) x *= s;
    return out;
}

inline void add_identity_inplace(DenseMatrix& a, double s) {
    require(a.rows == a.cols, "add_identity_inplace: square matrix required");
    for (std::size_t i = 0; i < a.rows; ++i) a(i, i) += s;
}

inline DenseVector vadd(const DenseVector& a, const DenseVector& b) {
    require(a.size() == b.size(), "vadd: length mismatch");
    DenseVector out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline DenseVector vsub(const DenseVector& a, const DenseVector& b) {
    require(a.size() == b.size(), "vsub: length mismatch");
    DenseVector out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline DenseVector vscale(const DenseVector& a, double s) {
    DenseVector out = a;
    for (double& x : out) x *= s;
    return out;
}

// y += s * x
inline void axpy(double s, const DenseVector& x, DenseVector& y) {
    require(x.size() == y.size(), "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline double dot(const DenseVector& a, const DenseVector& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2sq(const DenseVector& v) { return dot(v, v); }
inline double norm2(const DenseVector& v) { return std::sqrt(norm2sq(v)); }

inline double norm1(const DenseVector& v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

inline double max_abs(const DenseVector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double max_abs_diff(const DenseVector& a, const DenseVector& b) {
    require(a.size() == b.size(), "max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "max_abs_diff: shape mismatch");
    return max_abs_diff(a.data, b.data);
}

// Frobenius inner product <a, b> = sum_ij a_ij b_ij.
inline double frob_inner(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows == b.rows && a.cols == b.cols, "frob_inner: shape mismatch");
    return dot(a.data, b.data);
}

inline double trace(const DenseMatrix& a) {
    require(a.rows == a.cols, "trace: square matrix required");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) acc += a(i, i);
    return acc;
}

// g += u v^T
inline void outer_acc(DenseMatrix& g, const DenseVector& u, const DenseVector& v) {
    require(g.rows == u.size() && g.cols == v.size(), "outer_acc: shape mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) {
        double* grow = &g.data[i * g.cols];
        const double ui = u[i];
        for (std::size_t j = 0; j < v.size(); ++j) grow[j] += ui * v[j];
    }
}

// Thrown when power iteration fails to settle; carries the last estimate so
// the caller can still inspect it.
struct SpectralNormError : std::runtime_error {
    double last_estimate;
    explicit SpectralNormError(double est)
        : std::runtime_error("spectral_norm_sq: power iteration did not converge, last estimate " +
                             std::to_string(est)),
          last_estimate(est) {}
};

// Squared spectral norm ||m||_2^2 = lambda_max(m^T m), by power iteration on
// m^T m to relative tolerance 1e-10 (at most 10000 iterations). The start
// vector comes from a fixed internal seed so the result is deterministic.
inline double spectral_norm_sq(const DenseMatrix& m) {
    if (m.rows == 0 || m.cols == 0) return 0.0;
    const DenseMatrix b = matmul(transpose(m), m);
    const std::size_t n = b.rows;

    // Fixed pseudo-random start; a deterministic dense direction is almost
    // never orthogonal to the dominant eigenvector.
    DenseVector v(n);
    std::uint64_t s = 0x9E3779B97F4A7C15ull;
    for (std::size_t i = 0; i < n; ++i) {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        v[i] = 0.5 + static_cast<double>(s % 1000003u) / 1000003.0;
    }
    double nv = norm2(v);
    for (double& x : v) x /= nv;

    const double rel_tol = 1e-10;
    const std::size_t max_iter = 10000;
    double lambda_prev = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        DenseVector bv = matvec(b, v);
        const double bn = norm2(bv);
        if (bn == 0.0) return 0.0;  // v in the null space: iterate is stuck at 0
        for (double& x : bv) x /= bn;
        const double lambda = dot(bv, matvec(b, bv));
        if (std::abs(lambda - lambda_prev) <= rel_tol * std::max(std::abs(lambda), 1e-300))
            return lambda;
        lambda_prev = lambda;
        v = std::move(bv);
    }
    throw SpectralNormError(lambda_prev);
}

}  // namespace ssr
