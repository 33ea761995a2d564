// Iterative sparse recovery: soft-thresholding, ISTA for the single-vector
// lasso problem, and SISTA, the sequential variant that couples consecutive
// time steps through a linear prediction term and warm starts.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ssr/linalg.hpp"

namespace ssr {

// Elementwise sign(z) * max(|z| - b, 0). Defined as 0 at z = 0.
inline DenseVector soft_threshold(const DenseVector& z, double b) {
    require(b >= 0.0, "soft_threshold: threshold must be nonnegative");
    DenseVector out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double a = std::abs(z[i]) - b;
        out[i] = a > 0.0 ? (z[i] > 0.0 ? a : -a) : 0.0;
    }
    return out;
}

// min_h 1/2 ||x - A D h||^2 + lambda ||h||_1
struct LassoProblem {
    DenseMatrix A;  // M x N measurement
    DenseMatrix D;  // N x N dictionary
    DenseVector x;  // observation, length M
    double lambda = 0.0;
};

inline void validate(const LassoProblem& p) {
    require(p.D.rows == p.D.cols, "LassoProblem: D must be square");
    require(p.A.cols == p.D.rows, "LassoProblem: A/D dimension mismatch");
    require(p.x.size() == p.A.rows, "LassoProblem: observation length mismatch");
    require(p.lambda >= 0.0, "LassoProblem: lambda must be nonnegative");
}

inline double lasso_objective(const LassoProblem& p, const DenseVector& h) {
    validate(p);
    require(h.size() == p.D.cols, "lasso_objective: h length mismatch");
    const DenseVector r = vsub(p.x, matvec(p.A, matvec(p.D, h)));
    return 0.5 * norm2sq(r) + p.lambda * norm1(h);
}

struct IstaResult {
    DenseVector h;
    std::vector<double> trace;  // objective after each iteration
};

// Exactly `iters` iterations of
//   z <- (I - (1/alpha) D^T A^T A D) h + (1/alpha) D^T A^T x
//   h <- soft_{lambda/alpha}(z)
// Descent per iteration is guaranteed when alpha >= ||A D||_2^2.
inline IstaResult ista(const LassoProblem& p, const DenseVector& h0, double alpha,
                       std::size_t iters, bool with_trace = true) {
    validate(p);
    require(alpha > 0.0, "ista: alpha must be positive");
    require(h0.size() == p.D.cols, "ista: h0 length mismatch");

    const DenseMatrix ad = matmul(p.A, p.D);
    const DenseMatrix gram = matmul(transpose(ad), ad);  // D^T A^T A D
    const DenseVector c = vscale(matvec_t(ad, p.x), 1.0 / alpha);

    IstaResult res;
    res.h = h0;
    for (std::size_t k = 0; k < iters; ++k) {
        DenseVector z = matvec(gram, res.h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = res.h[i] - z[i] / alpha + c[i];
        res.h = soft_threshold(z, p.lambda / alpha);
        if (with_trace) res.trace.push_back(lasso_objective(p, res.h));
    }
    return res;
}

struct IstaConvergedResult {
    DenseVector h;
    std::size_t iters = 0;
    bool converged = false;  // false means max_iter was hit
    std::vector<double> trace;
};

// Iterates until the relative objective improvement
// (obj_{k-1} - obj_k) / max(obj_{k-1}, 1e-300) drops below rel_tol.
inline IstaConvergedResult ista_converged(const LassoProblem& p, const DenseVector& h0,
                                          double alpha, double rel_tol, std::size_t max_iter) {
    validate(p);
    require(alpha > 0.0, "ista_converged: alpha must be positive");
    require(rel_tol > 0.0, "ista_converged: rel_tol must be positive");
    require(h0.size() == p.D.cols, "ista_converged: h0 length mismatch");

    const DenseMatrix ad = matmul(p.A, p.D);
    const DenseMatrix gram = matmul(transpose(ad), ad);
    const DenseVector c = vscale(matvec_t(ad, p.x), 1.0 / alpha);

    IstaConvergedResult res;
    res.h = h0;
    double obj_prev = lasso_objective(p, res.h);
    while (res.iters < max_iter) {
        DenseVector z = matvec(gram, res.h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = res.h[i] - z[i] / alpha + c[i];
        res.h = soft_threshold(z, p.lambda / alpha);
        ++res.iters;
        const double obj = lasso_objective(p, res.h);
        res.trace.push_back(obj);
        if ((obj_prev - obj) / std::max(obj_prev, 1e-300) < rel_tol) {
            res.converged = true;
            break;
        }
        obj_prev = obj;
    }
    return res;
}

// The interpretable SISTA parameter set {A, D, F, h0, alpha, lambda1, lambda2}.
// lambda2 may be negative (training can drive it there); the descent
// guarantee only applies for lambda2 >= 0.
struct SistaParams {
    DenseMatrix A;   // M x N
    DenseMatrix D;   // N x N
    DenseMatrix F;   // N x N prediction matrix
    DenseVector h0;  // length N
    double alpha = 1.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

inline void validate(const SistaParams& p) {
    require(p.D.rows == p.D.cols, "SistaParams: D must be square");
    require(p.F.rows == p.D.rows && p.F.cols == p.D.cols, "SistaParams: F shape mismatch");
    require(p.A.cols == p.D.rows, "SistaParams: A/D dimension mismatch");
    require(p.h0.size() == p.D.cols, "SistaParams: h0 length mismatch");
    require(p.alpha > 0.0, "SistaParams: alpha must be positive");
}

// One term of the sequential objective, with the previous code fixed:
// 1/2 ||x - A D h||^2 + lambda1 ||h||_1 + lambda2/2 ||D h - F D h_prev||^2.
inline double sista_step_objective(const SistaParams& p, const DenseVector& h,
                                   const DenseVector& x, const DenseVector& h_prev) {
    const DenseVector dh = matvec(p.D, h);
    const DenseVector pred = matvec(p.F, matvec(p.D, h_prev));
    const DenseVector r = vsub(x, matvec(p.A, dh));
    return 0.5 * norm2sq(r) + p.lambda1 * norm1(h) + 0.5 * p.lambda2 * norm2sq(vsub(dh, pred));
}

// Full sequential objective over h_{1:T}; the t=1 prediction term uses p.h0.
inline double sista_objective(const SistaParams& p, const std::vector<DenseVector>& h_seq,
                              const std::vector<DenseVector>& x_seq) {
    validate(p);
    require(h_seq.size() == x_seq.size(), "sista_objective: sequence length mismatch");
    double total = 0.0;
    for (std::size_t t = 0; t < h_seq.size(); ++t) {
        const DenseVector& h_prev = (t == 0) ? p.h0 : h_seq[t - 1];
        total += sista_step_objective(p, h_seq[t], x_seq[t], h_prev);
    }
    return total;
}

struct SistaOptions {
    bool trace_objective = false;  // costs an extra pass per inner iteration
    bool record_inner = false;     // keep every inner iterate, warm start included
};

struct RecoveryResult {
    std::vector<DenseVector> h_seq;  // sparse codes, one per time step
    std::vector<DenseVector> y_seq;  // reconstructions D h_t
    // Per-step objective after each inner iteration, flattened t-major;
    // filled only when trace_objective is set.
    std::vector<double> objective_trace;
    // inner_iterates[t][k], k = 0 is the warm start; filled when record_inner.
    std::vector<std::vector<DenseVector>> inner_iterates;
    std::vector<std::size_t> iters_per_step;  // inner iterations actually run
    bool hit_max_iter = false;                // only sista_converged sets this
};

namespace detail {

struct SistaOperators {
    DenseMatrix step;      // I - (1/alpha) D^T (A^T A + lambda2 I) D
    DenseMatrix input;     // (1/alpha) D^T A^T
    DenseMatrix predict;   // P = D^T F D
    double threshold;      // lambda1 / alpha
    double couple_scale;   // lambda2 / alpha
};

inline SistaOperators make_sista_operators(const SistaParams& p) {
    SistaOperators ops;
    DenseMatrix b = matmul(transpose(p.A), p.A);
    add_identity_inplace(b, p.lambda2);
    ops.step = scale(matmul(matmul(transpose(p.D), b), p.D), -1.0 / p.alpha);
    add_identity_inplace(ops.step, 1.0);
    ops.input = scale(matmul(transpose(p.D), transpose(p.A)), 1.0 / p.alpha);
    ops.predict = matmul(matmul(transpose(p.D), p.F), p.D);
    ops.threshold = p.lambda1 / p.alpha;
    ops.couple_scale = p.lambda2 / p.alpha;
    return ops;
}

}  // namespace detail

// Algorithm: for each time step, warm-start from the previous estimate's
// prediction h_t^(0) = D^T F D h_{t-1}, then run `iters` soft-thresholded
// gradient steps on the coupled per-step problem.
inline RecoveryResult sista(const std::vector<DenseVector>& x_seq, const SistaParams& p,
                            std::size_t iters, const SistaOptions& opt = {}) {
    validate(p);
    require(iters >= 1, "sista: iteration count must be >= 1");
    const detail::SistaOperators ops = detail::make_sista_operators(p);

    RecoveryResult res;
    DenseVector h_prev = p.h0;
    for (std::size_t t = 0; t < x_seq.size(); ++t) {
        require(x_seq[t].size() == p.A.rows, "sista: observation length mismatch");
        const DenseVector warm = matvec(ops.predict, h_prev);
        const DenseVector base = matvec(ops.input, x_seq[t]);
        DenseVector h = warm;
        if (opt.record_inner) res.inner_iterates.push_back({h});
        for (std::size_t k = 0; k < iters; ++k) {
            DenseVector z = matvec(ops.step, h);
            for (std::size_t i = 0; i < z.size(); ++i)
                z[i] += base[i] + ops.couple_scale * warm[i];
            h = soft_threshold(z, ops.threshold);
            if (opt.record_inner) res.inner_iterates.back().push_back(h);
            if (opt.trace_objective)
                res.objective_trace.push_back(sista_step_objective(p, h, x_seq[t], h_prev));
        }
        res.iters_per_step.push_back(iters);
        res.y_seq.push_back(matvec(p.D, h));
        res.h_seq.push_back(h);
        h_prev = std::move(h);
    }
    return res;
}

// Per-time-step analogue of ista_converged on the coupled problem: each step
// iterates until the relative improvement of its own objective (previous
// estimate held fixed) falls below rel_tol, or max_iter is hit.
inline RecoveryResult sista_converged(const std::vector<DenseVector>& x_seq,
                                      const SistaParams& p, double rel_tol,
                                      std::size_t max_iter, const SistaOptions& opt = {}) {
    validate(p);
    require(rel_tol > 0.0, "sista_converged: rel_tol must be positive");
    require(max_iter >= 1, "sista_converged: max_iter must be >= 1");
    const detail::SistaOperators ops = detail::make_sista_operators(p);

    RecoveryResult res;
    DenseVector h_prev = p.h0;
    for (std::size_t t = 0; t < x_seq.size(); ++t) {
        require(x_seq[t].size() == p.A.rows, "sista_converged: observation length mismatch");
        const DenseVector warm = matvec(ops.predict, h_prev);
        const DenseVector base = matvec(ops.input, x_seq[t]);
        DenseVector h = warm;
        if (opt.record_inner) res.inner_iterates.push_back({h});
        double obj_prev = sista_step_objective(p, h, x_seq[t], h_prev);
        std::size_t k = 0;
        bool converged = false;
        while (k < max_iter) {
            DenseVector z = matvec(ops.step, h);
            for (std::size_t i = 0; i < z.size(); ++i)
                z[i] += base[i] + ops.couple_scale * warm[i];
            h = soft_threshold(z, ops.threshold);
            ++k;
            if (opt.record_inner) res.inner_iterates.back().push_back(h);
            const double obj = sista_step_objective(p, h, x_seq[t], h_prev);
            if (opt.trace_objective) res.objective_trace.push_back(obj);
            if ((obj_prev - obj) / std::max(obj_prev, 1e-300) < rel_tol) {
                converged = true;
                break;
            }
            obj_prev = obj;
        }
        if (!converged) res.hit_max_iter = true;
        res.iters_per_step.push_back(k);
        res.y_seq.push_back(matvec(p.D, h));
        res.h_seq.push_back(h);
        h_prev = std::move(h);
    }
    return res;
}

}  // namespace ssr
