// The stacked-RNN view of sequential sparse recovery.
//
// A K-layer stacked RNN with soft-threshold activations reproduces the SISTA
// iteration exactly when (a) the input is fed to every layer, (b) recurrence
// reads the previous step's LAST layer, and (c) the weights are tied to the
// solver parameters by an explicit mapping. This header implements the
// generic and solver-connectivity forward passes, the parameter mapping and
// its adjoint, and reverse-mode gradients for three parameterizations:
// free structural weights, per-layer solver parameters (untied), and shared
// solver parameters (tied).
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ssr/linalg.hpp"
#include "ssr/solvers.hpp"

namespace ssr {

enum class Connectivity { generic, sista };

// Structural parameters {h0, b, W, V, S, U, c} of a stacked RNN.
//   generic: layer 1 sees V x_t; layer k>1 sees S^(k) h^(k-1)_t; every layer
//            recurs on its own previous state. h0 holds one vector per layer.
//   sista:   every layer sees V^(k) x_t and recurs on the LAST layer's
//            previous state. h0 holds a single vector.
struct StackedRnnParams {
    Connectivity connectivity = Connectivity::sista;
    std::size_t n = 0;  // hidden size
    std::size_t m = 0;  // input size
    std::size_t k = 0;  // layer count
    std::vector<DenseVector> h0;  // sista: 1; generic: k
    std::vector<DenseVector> b;   // k threshold vectors, length n
    std::vector<DenseMatrix> W;   // k recurrence matrices, n x n
    std::vector<DenseMatrix> V;   // input matrices, n x m; sista: k, generic: >= 1
    std::vector<DenseMatrix> S;   // k-1 cross-layer matrices; S[j] feeds layer j+2
    DenseMatrix U;                // n x n output matrix
    DenseVector c;                // length n output bias
};

inline void validate(const StackedRnnParams& p) {
    require(p.k >= 1, "StackedRnnParams: need at least one layer");
    require(p.W.size() == p.k && p.b.size() == p.k, "StackedRnnParams: W/b count mismatch");
    require(p.S.size() + 1 == p.k, "StackedRnnParams: S count must be k-1");
    if (p.connectivity == Connectivity::sista) {
        require(p.V.size() == p.k, "StackedRnnParams: sista connectivity needs V per layer");
        require(p.h0.size() == 1, "StackedRnnParams: sista connectivity has a single h0");
    } else {
        require(!p.V.empty(), "StackedRnnParams: generic connectivity needs V for layer 1");
        require(p.h0.size() == p.k, "StackedRnnParams: generic connectivity needs h0 per layer");
    }
    for (const auto& w : p.W) require(w.rows == p.n && w.cols == p.n, "StackedRnnParams: W shape");
    for (const auto& v : p.V) require(v.rows == p.n && v.cols == p.m, "StackedRnnParams: V shape");
    for (const auto& s : p.S) require(s.rows == p.n && s.cols == p.n, "StackedRnnParams: S shape");
    for (const auto& h : p.h0) require(h.size() == p.n, "StackedRnnParams: h0 length");
    for (const auto& b : p.b) require(b.size() == p.n, "StackedRnnParams: b length");
    require(p.U.rows == p.n && p.U.cols == p.n, "StackedRnnParams: U shape");
    require(p.c.size() == p.n, "StackedRnnParams: c length");
}

namespace detail {

// Activation used by the network: elementwise sign(z) max(|z| - b_i, 0).
// Unlike the solver-facing soft_threshold, b may be negative here (it is a
// free trained parameter in generic mode); the value at z = 0 is 0.
inline DenseVector soft_vec(const DenseVector& z, const DenseVector& b) {
    DenseVector out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double a = std::abs(z[i]) - b[i];
        out[i] = (a > 0.0 && z[i] != 0.0) ? (z[i] > 0.0 ? a : -a) : 0.0;
    }
    return out;
}

inline void validate_dims(const SistaParams& p) {
    require(p.D.rows == p.D.cols, "SistaParams: D must be square");
    require(p.F.rows == p.D.rows && p.F.cols == p.D.cols, "SistaParams: F shape mismatch");
    require(p.A.cols == p.D.rows, "SistaParams: A/D dimension mismatch");
    require(p.h0.size() == p.D.cols, "SistaParams: h0 length mismatch");
}

}  // namespace detail

// The exact weight mapping:
//   P     = D^T F D
//   V^(k) = (1/a) D^T A^T                                      for all k
//   S^(k) = I - (1/a) D^T (A^T A + l2 I) D                     for k > 1
//   W^(1) = ((a+l2)/a) P - (1/a) D^T (A^T A + l2 I) D P
//   W^(k) = (l2/a) P                                           for k > 1
//   U = D, c = 0, b^(k) = (l1/a) 1
// Requires alpha != 0 (sign-flipped alpha is allowed for trained nets).
inline StackedRnnParams map_sista_to_rnn(const SistaParams& p, std::size_t k) {
    detail::validate_dims(p);
    require(k >= 1, "map_sista_to_rnn: need at least one layer");
    require(p.alpha != 0.0, "map_sista_to_rnn: alpha must be nonzero");
    const std::size_t n = p.D.rows;
    const double a = p.alpha;

    DenseMatrix bmat = matmul(transpose(p.A), p.A);
    add_identity_inplace(bmat, p.lambda2);
    const DenseMatrix g = matmul(matmul(transpose(p.D), bmat), p.D);
    const DenseMatrix pmat = matmul(matmul(transpose(p.D), p.F), p.D);

    DenseMatrix s = scale(g, -1.0 / a);
    add_identity_inplace(s, 1.0);
    const DenseMatrix v = scale(matmul(transpose(p.D), transpose(p.A)), 1.0 / a);
    const DenseMatrix w1 = sub(scale(pmat, (a + p.lambda2) / a), scale(matmul(g, pmat), 1.0 / a));
    const DenseMatrix wk = scale(pmat, p.lambda2 / a);

    StackedRnnParams out;
    out.connectivity = Connectivity::sista;
    out.n = n;
    out.m = p.A.rows;
    out.k = k;
    out.h0 = {p.h0};
    out.c = DenseVector(n, 0.0);
    out.U = p.D;
    for (std::size_t layer = 0; layer < k; ++layer) {
        out.W.push_back(layer == 0 ? w1 : wk);
        out.V.push_back(v);
        out.b.push_back(DenseVector(n, p.lambda1 / a));
        if (layer > 0) out.S.push_back(s);
    }
    return out;
}

// Everything backward needs to replay one forward pass.
struct ForwardTape {
    Connectivity connectivity = Connectivity::sista;
    std::size_t n = 0, m = 0, k = 0;
    std::vector<DenseVector> x;                   // inputs x_{1:T}
    std::vector<std::vector<DenseVector>> pre;    // [t][layer] pre-activations
    std::vector<std::vector<DenseVector>> h;      // [t][layer] hidden states
    std::vector<DenseVector> y_hat;
};

struct ForwardResult {
    std::vector<DenseVector> y_hat;
    ForwardTape tape;
};

inline ForwardResult forward(const StackedRnnParams& p, const std::vector<DenseVector>& x_seq) {
    validate(p);
    ForwardResult res;
    ForwardTape& tape = res.tape;
    tape.connectivity = p.connectivity;
    tape.n = p.n;
    tape.m = p.m;
    tape.k = p.k;
    tape.x = x_seq;

    const bool sista_mode = p.connectivity == Connectivity::sista;
    for (std::size_t t = 0; t < x_seq.size(); ++t) {
        require(x_seq[t].size() == p.m, "forward: input length mismatch");
        tape.pre.emplace_back();
        tape.h.emplace_back();
        for (std::size_t layer = 0; layer < p.k; ++layer) {
            const DenseVector& rec_src =
                sista_mode ? (t == 0 ? p.h0[0] : tape.h[t - 1][p.k - 1])
                           : (t == 0 ? p.h0[layer] : tape.h[t - 1][layer]);
            DenseVector pre = matvec(p.W[layer], rec_src);
            if (sista_mode) {
                axpy(1.0, matvec(p.V[layer], x_seq[t]), pre);
            } else if (layer == 0) {
                axpy(1.0, matvec(p.V[0], x_seq[t]), pre);
            }
            if (layer > 0) axpy(1.0, matvec(p.S[layer - 1], tape.h[t][layer - 1]), pre);
            tape.h[t].push_back(detail::soft_vec(pre, p.b[layer]));
            tape.pre[t].push_back(std::move(pre));
        }
        DenseVector y = matvec(p.U, tape.h[t][p.k - 1]);
        axpy(1.0, p.c, y);  // y += c, written out for clarity
        tape.y_hat.push_back(y);
        res.y_hat.push_back(std::move(y));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Reverse mode
// ---------------------------------------------------------------------------

// Gradients with the same shape as StackedRnnParams.
struct RnnGrads {
    std::vector<DenseVector> h0, b;
    std::vector<DenseMatrix> W, V, S;
    DenseMatrix U;
    DenseVector c;
};

// Backpropagation through time for either connectivity. grad_y holds
// dLoss/dy_hat_t. Soft-threshold subgradient convention: 0 on the closed
// dead zone |z| <= b, 1 outside; d/db is -sign(z) outside, 0 inside.
inline RnnGrads backward_rnn(const StackedRnnParams& p, const ForwardTape& tape,
                             const std::vector<DenseVector>& grad_y) {
    validate(p);
    require(tape.connectivity == p.connectivity && tape.n == p.n && tape.m == p.m &&
                tape.k == p.k,
            "backward_rnn: tape does not match parameters");
    require(grad_y.size() == tape.h.size(), "backward_rnn: gradient sequence length mismatch");

    const std::size_t steps = tape.h.size();
    const std::size_t layers = p.k;
    const bool sista_mode = p.connectivity == Connectivity::sista;

    RnnGrads g;
    g.h0.assign(p.h0.size(), DenseVector(p.n, 0.0));
    g.b.assign(layers, DenseVector(p.n, 0.0));
    g.W.assign(layers, DenseMatrix(p.n, p.n));
    g.V.assign(p.V.size(), DenseMatrix(p.n, p.m));
    g.S.assign(p.S.size(), DenseMatrix(p.n, p.n));
    g.U = DenseMatrix(p.n, p.n);
    g.c = DenseVector(p.n, 0.0);

    // dh[t][layer]: gradient w.r.t. hidden states, filled while walking back.
    std::vector<std::vector<DenseVector>> dh(steps,
                                             std::vector<DenseVector>(layers, DenseVector()));
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t l = 0; l < layers; ++l) dh[t][l].assign(p.n, 0.0);

    for (std::size_t ti = steps; ti-- > 0;) {
        require(grad_y[ti].size() == p.n, "backward_rnn: grad_y length mismatch");
        // Output layer.
        axpy(1.0, matvec_t(p.U, grad_y[ti]), dh[ti][layers - 1]);
        outer_acc(g.U, grad_y[ti], tape.h[ti][layers - 1]);
        axpy(1.0, grad_y[ti], g.c);

        for (std::size_t l = layers; l-- > 0;) {
            const DenseVector& pre = tape.pre[ti][l];
            const DenseVector& bl = p.b[l];
            DenseVector dpre(p.n, 0.0);
            for (std::size_t i = 0; i < p.n; ++i) {
                if (std::abs(pre[i]) > bl[i] && pre[i] != 0.0) {
                    dpre[i] = dh[ti][l][i];
                    g.b[l][i] -= (pre[i] > 0.0 ? 1.0 : -1.0) * dh[ti][l][i];
                }
            }
            const DenseVector& rec_src =
                sista_mode ? (ti == 0 ? p.h0[0] : tape.h[ti - 1][layers - 1])
                           : (ti == 0 ? p.h0[l] : tape.h[ti - 1][l]);
            outer_acc(g.W[l], dpre, rec_src);
            DenseVector back = matvec_t(p.W[l], dpre);
            if (sista_mode) {
                if (ti == 0) {
                    axpy(1.0, back, g.h0[0]);
                } else {
                    axpy(1.0, back, dh[ti - 1][layers - 1]);
                }
                outer_acc(g.V[l], dpre, tape.x[ti]);
            } else {
                if (ti == 0) {
                    axpy(1.0, back, g.h0[l]);
                } else {
                    axpy(1.0, back, dh[ti - 1][l]);
                }
                if (l == 0) outer_acc(g.V[0], dpre, tape.x[ti]);
            }
            if (l > 0) {
                outer_acc(g.S[l - 1], dpre, tape.h[ti][l - 1]);
                axpy(1.0, matvec_t(p.S[l - 1], dpre), dh[ti][l - 1]);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Solver parameterizations on top of the structural network
// ---------------------------------------------------------------------------

struct TiedSistaNet {
    SistaParams params;
    std::size_t k = 1;  // layer count = solver iterations per step
};

// Forward pass of the tied net; identical to running the solver with k
// iterations, evaluated through the mapped network so a tape is produced.
inline ForwardResult forward_tied(const TiedSistaNet& net,
                                  const std::vector<DenseVector>& x_seq) {
    return forward(map_sista_to_rnn(net.params, net.k), x_seq);
}

// Per-layer solver parameters (the untied parameterization).
struct UntiedSistaLayer {
    DenseMatrix A, D, F;
    double alpha = 1.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

struct UntiedSistaParams {
    std::vector<UntiedSistaLayer> layers;
    DenseVector h0;
};

inline void validate(const UntiedSistaParams& p) {
    require(!p.layers.empty(), "UntiedSistaParams: need at least one layer");
    const std::size_t n = p.layers[0].D.rows;
    const std::size_t m = p.layers[0].A.rows;
    for (const auto& l : p.layers) {
        require(l.D.rows == n && l.D.cols == n, "UntiedSistaParams: D shape");
        require(l.F.rows == n && l.F.cols == n, "UntiedSistaParams: F shape");
        require(l.A.rows == m && l.A.cols == n, "UntiedSistaParams: A shape");
        require(l.alpha != 0.0, "UntiedSistaParams: alpha must be nonzero");
    }
    require(p.h0.size() == n, "UntiedSistaParams: h0 length");
}

// Builds the structural network whose layer k uses layer k's solver
// parameters. The output matrix is the last layer's dictionary.
inline StackedRnnParams untied_to_rnn(const UntiedSistaParams& p) {
    validate(p);
    const std::size_t k = p.layers.size();
    StackedRnnParams out;
    out.connectivity = Connectivity::sista;
    out.n = p.layers[0].D.rows;
    out.m = p.layers[0].A.rows;
    out.k = k;
    out.h0 = {p.h0};
    out.c = DenseVector(out.n, 0.0);
    for (std::size_t layer = 0; layer < k; ++layer) {
        const UntiedSistaLayer& lp = p.layers[layer];
        SistaParams one{lp.A, lp.D, lp.F, DenseVector(out.n, 0.0),
                        lp.alpha, lp.lambda1, lp.lambda2};
        const StackedRnnParams mapped = map_sista_to_rnn(one, layer == 0 ? 1 : 2);
        out.W.push_back(layer == 0 ? mapped.W[0] : mapped.W[1]);
        out.V.push_back(mapped.V[0]);
        out.b.push_back(mapped.b[0]);
        if (layer > 0) out.S.push_back(mapped.S[0]);
        if (layer == k - 1) out.U = lp.D;
    }
    return out;
}

inline ForwardResult forward_untied(const UntiedSistaParams& p,
                                    const std::vector<DenseVector>& x_seq) {
    return forward(untied_to_rnn(p), x_seq);
}

// Gradients with the same shape as SistaParams.
struct SistaGrads {
    DenseMatrix A, D, F;
    DenseVector h0;
    double alpha = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

namespace detail {

// Structural-weight gradients attributed to one solver parameter set.
// Null members mean "no contribution". dWk/dS/dV arrive pre-summed when one
// parameter set feeds several layers (the tied case).
struct MappedStructGrads {
    const DenseMatrix* w1 = nullptr;      // gradient of W^(1)
    const DenseMatrix* wk_sum = nullptr;  // sum of W^(k>1) gradients
    const DenseMatrix* s_sum = nullptr;   // sum of S^(k>1) gradients
    const DenseMatrix* v_sum = nullptr;   // sum of V^(k) gradients
    double b_sum = 0.0;                   // sum over layers and entries of b grads
    const DenseMatrix* u = nullptr;       // gradient of U (chains into D)
};

// Adjoint of map_sista_to_rnn for a single parameter set. Recomputes the
// mapping intermediates and pushes the structural gradients back onto
// {A, D, F, alpha, lambda1, lambda2}.
inline SistaGrads map_adjoint(const DenseMatrix& A, const DenseMatrix& D, const DenseMatrix& F,
                              double alpha, double lambda1, double lambda2,
                              const MappedStructGrads& in) {
    const std::size_t n = D.rows;
    const double a = alpha;

    DenseMatrix bmat = matmul(transpose(A), A);
    add_identity_inplace(bmat, lambda2);                   // B = A^T A + l2 I
    const DenseMatrix g = matmul(matmul(transpose(D), bmat), D);  // G = D^T B D
    const DenseMatrix pmat = matmul(matmul(transpose(D), F), D);  // P = D^T F D

    SistaGrads out;
    out.A = DenseMatrix(A.rows, A.cols);
    out.D = DenseMatrix(n, n);
    out.F = DenseMatrix(n, n);
    out.h0 = DenseVector(n, 0.0);

    DenseMatrix dg(n, n);  // accumulated gradient w.r.t. G
    DenseMatrix dp(n, n);  // accumulated gradient w.r.t. P

    if (in.w1) {
        // W^(1) = ((a+l2)/a) P - (1/a) G P
        const DenseMatrix gp = matmul(g, pmat);
        const double c1 = (a + lambda2) / a;
        dp = add(dp, sub(scale(*in.w1, c1), scale(matmul(transpose(g), *in.w1), 1.0 / a)));
        dg = add(dg, scale(matmul(*in.w1, transpose(pmat)), -1.0 / a));
        out.alpha += frob_inner(*in.w1, gp) / (a * a) - lambda2 / (a * a) * frob_inner(*in.w1, pmat);
        out.lambda2 += frob_inner(*in.w1, pmat) / a;
    }
    if (in.wk_sum) {
        // W^(k>1) = (l2/a) P
        const double ip = frob_inner(*in.wk_sum, pmat);
        dp = add(dp, scale(*in.wk_sum, lambda2 / a));
        out.lambda2 += ip / a;
        out.alpha -= lambda2 / (a * a) * ip;
    }
    if (in.s_sum) {
        // S = I - (1/a) G
        dg = add(dg, scale(*in.s_sum, -1.0 / a));
        out.alpha += frob_inner(*in.s_sum, g) / (a * a);
    }
    if (in.v_sum) {
        // V = (1/a) (A D)^T
        out.alpha -= frob_inner(*in.v_sum, matmul(transpose(D), transpose(A))) / (a * a);
        const DenseMatrix dz = scale(transpose(*in.v_sum), 1.0 / a);  // gradient w.r.t. A D
        out.A = add(out.A, matmul(dz, transpose(D)));
        out.D = add(out.D, matmul(transpose(A), dz));
    }
    // b^(k) = (l1/a) 1
    out.lambda1 += in.b_sum / a;
    out.alpha -= lambda1 / (a * a) * in.b_sum;
    if (in.u) out.D = add(out.D, *in.u);  // U = D

    // G = D^T B D
    const DenseMatrix db = matmul(matmul(D, dg), transpose(D));
    out.D = add(out.D, matmul(bmat, matmul(D, add(dg, transpose(dg)))));
    // B = A^T A + l2 I
    out.A = add(out.A, matmul(A, add(db, transpose(db))));
    out.lambda2 += trace(db);
    // P = D^T F D
    out.F = add(out.F, matmul(matmul(D, dp), transpose(D)));
    out.D = add(out.D, add(matmul(F, matmul(D, transpose(dp))),
                           matmul(transpose(F), matmul(D, dp))));
    return out;
}

}  // namespace detail

// Pushes structural-weight gradients (already summed over a batch if needed;
// chaining is linear) through the mapping adjoint onto shared parameters.
inline SistaGrads chain_tied(const SistaParams& p, std::size_t k, const RnnGrads& rg) {
    const std::size_t n = p.D.rows;
    DenseMatrix wk_sum(n, n), s_sum(n, n), v_sum(n, p.A.rows);
    for (std::size_t l = 1; l < k; ++l) wk_sum = add(wk_sum, rg.W[l]);
    for (const auto& s : rg.S) s_sum = add(s_sum, s);
    for (const auto& v : rg.V) v_sum = add(v_sum, v);
    double b_sum = 0.0;
    for (const auto& b : rg.b)
        for (double x : b) b_sum += x;

    detail::MappedStructGrads sg;
    sg.w1 = &rg.W[0];
    if (k > 1) {
        sg.wk_sum = &wk_sum;
        sg.s_sum = &s_sum;
    }
    sg.v_sum = &v_sum;
    sg.b_sum = b_sum;
    sg.u = &rg.U;

    SistaGrads out = detail::map_adjoint(p.A, p.D, p.F, p.alpha, p.lambda1, p.lambda2, sg);
    out.h0 = rg.h0[0];
    return out;
}

// Gradients of the tied parameterization: structural gradients summed over
// layers and pushed through the mapping adjoint.
inline SistaGrads backward_tied(const TiedSistaNet& net, const ForwardTape& tape,
                                const std::vector<DenseVector>& grad_y) {
    const StackedRnnParams mapped = map_sista_to_rnn(net.params, net.k);
    return chain_tied(net.params, net.k, backward_rnn(mapped, tape, grad_y));
}

struct UntiedSistaGrads {
    std::vector<SistaGrads> layers;  // per-layer A/D/F/alpha/lambda gradients
    DenseVector h0;
};

inline UntiedSistaGrads chain_untied(const UntiedSistaParams& p, const RnnGrads& rg) {
    const std::size_t k = p.layers.size();
    UntiedSistaGrads out;
    for (std::size_t l = 0; l < k; ++l) {
        const UntiedSistaLayer& lp = p.layers[l];
        double b_sum = 0.0;
        for (double x : rg.b[l]) b_sum += x;
        detail::MappedStructGrads sg;
        if (l == 0) {
            sg.w1 = &rg.W[0];
        } else {
            sg.wk_sum = &rg.W[l];
            sg.s_sum = &rg.S[l - 1];
        }
        sg.v_sum = &rg.V[l];
        sg.b_sum = b_sum;
        if (l == k - 1) sg.u = &rg.U;
        out.layers.push_back(detail::map_adjoint(lp.A, lp.D, lp.F, lp.alpha, lp.lambda1,
                                                 lp.lambda2, sg));
    }
    out.h0 = rg.h0[0];
    return out;
}

inline UntiedSistaGrads backward_untied(const UntiedSistaParams& p, const ForwardTape& tape,
                                        const std::vector<DenseVector>& grad_y) {
    return chain_untied(p, backward_rnn(untied_to_rnn(p), tape, grad_y));
}

// ---------------------------------------------------------------------------
// Equivalence between the solver and the mapped network
// ---------------------------------------------------------------------------

struct EquivalenceReport {
    double max_abs_h = 0.0;  // max |solver code - network hidden state|
    double max_abs_y = 0.0;  // max |solver reconstruction - network output|
    double max_abs = 0.0;
    double tol = 0.0;
    bool pass = false;
};

// Runs the solver and the mapped network on the same inputs and reports the
// worst elementwise deviation over all final codes and outputs.
inline EquivalenceReport equivalence_check(const SistaParams& p, std::size_t k,
                                           const std::vector<DenseVector>& x_seq, double tol) {
    EquivalenceReport rep;
    rep.tol = tol;
    const RecoveryResult ref = sista(x_seq, p, k);
    const ForwardResult net = forward(map_sista_to_rnn(p, k), x_seq);
    for (std::size_t t = 0; t < x_seq.size(); ++t) {
        rep.max_abs_h = std::max(rep.max_abs_h,
                                 max_abs_diff(ref.h_seq[t], net.tape.h[t][k - 1]));
        rep.max_abs_y = std::max(rep.max_abs_y, max_abs_diff(ref.y_seq[t], net.y_hat[t]));
    }
    rep.max_abs = std::max(rep.max_abs_h, rep.max_abs_y);
    rep.pass = rep.max_abs < tol;
    return rep;
}

}  // namespace ssr
