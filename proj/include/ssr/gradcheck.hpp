// Central finite-difference validation of the analytic gradients. The
// numerical side is a self-contained re-implementation of the forward pass
// in extended (long double) precision: an independent route through the
// computation, and precise enough that the 1e-6 relative gate measures the
// gradients rather than double-precision cancellation noise in the
// differences.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ssr/instances.hpp"
#include "ssr/training.hpp"

namespace ssr {

struct GradCheckConfig {
    std::size_t n = 6, m = 3, t_len = 3, k = 2;
    std::size_t instances = 20;       // accepted instances per parameterization
    std::uint64_t seed = 0;
    double step = 1e-6;               // central-difference step
    double tol = 1e-6;                // max allowed relative error
    double kink_margin = 1e-3;        // require ||z| - b| > margin everywhere
    bool inject_sign_flip = false;    // self-test hook: corrupt one gradient
};

struct GradCheckReport {
    struct ModeResult {
        std::string mode;
        double max_rel_err = 0.0;
        std::string worst_block;
        std::size_t instances_checked = 0;
        std::size_t instances_skipped = 0;  // rejected by the kink margin
    };
    std::vector<ModeResult> modes;
    double max_rel_err = 0.0;
    bool pass = false;
};

// ---------------------------------------------------------------------------
// Extended-precision forward evaluation (finite-difference oracle only)
// ---------------------------------------------------------------------------

namespace ldo {

using LVec = std::vector<long double>;

struct LMat {
    std::size_t rows = 0, cols = 0;
    std::vector<long double> a;
    LMat() = default;
    LMat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0L) {}
    long double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    long double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

inline LMat mul(const LMat& x, const LMat& y) {
    LMat out(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t k = 0; k < x.cols; ++k) {
            const long double v = x(i, k);
            for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += v * y(k, j);
        }
    return out;
}

inline LMat tr(const LMat& x) {
    LMat out(x.cols, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
    return out;
}

inline LVec mv(const LMat& x, const LVec& v) {
    LVec out(x.rows, 0.0L);
    for (std::size_t i = 0; i < x.rows; ++i) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < x.cols; ++j) acc += x(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

// One unfolded layer in extended precision, from solver parameters.
struct LLayer {
    LMat w, v, s;  // s unused for the first layer
    long double b = 0.0L;
};

inline LLayer map_layer(const LMat& a_mat, const LMat& d_mat, const LMat& f_mat,
                        long double alpha, long double l1, long double l2, bool first) {
    const std::size_t n = d_mat.rows;
    LMat big = mul(tr(a_mat), a_mat);
    for (std::size_t i = 0; i < n; ++i) big(i, i) += l2;
    const LMat g = mul(mul(tr(d_mat), big), d_mat);
    const LMat p = mul(mul(tr(d_mat), f_mat), d_mat);

    LLayer lay;
    lay.b = l1 / alpha;
    lay.v = mul(tr(d_mat), tr(a_mat));
    for (auto& x : lay.v.a) x /= alpha;
    if (first) {
        const LMat gp = mul(g, p);
        lay.w = LMat(n, n);
        const long double c1 = (alpha + l2) / alpha;
        for (std::size_t i = 0; i < n * n; ++i) lay.w.a[i] = c1 * p.a[i] - gp.a[i] / alpha;
    } else {
        lay.w = p;
        for (auto& x : lay.w.a) x *= l2 / alpha;
        lay.s = LMat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                lay.s(i, j) = (i == j ? 1.0L : 0.0L) - g(i, j) / alpha;
    }
    return lay;
}

struct LNet {
    bool generic = false;
    std::size_t n = 0, m = 0, k = 0;
    std::vector<LVec> h0;        // 1 entry (solver wiring) or k (generic)
    std::vector<LMat> w, v, s;   // v: per layer (solver) or single (generic)
    std::vector<LVec> b;         // per-layer threshold vectors
    LMat u;
    LVec c;
};

inline long double soft1(long double z, long double b) {
    const long double m = (z < 0 ? -z : z) - b;
    if (m <= 0.0L || z == 0.0L) return 0.0L;
    return z > 0 ? m : -m;
}

// Forward pass + per-element mean squared error against the target.
inline long double forward_mse(const LNet& net, const std::vector<LVec>& x,
                               const std::vector<LVec>& y) {
    std::vector<std::vector<LVec>> h(x.size());
    long double acc = 0.0L;
    std::size_t count = 0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (std::size_t l = 0; l < net.k; ++l) {
            const LVec& rec = net.generic ? (t == 0 ? net.h0[l] : h[t - 1][l])
                                          : (t == 0 ? net.h0[0] : h[t - 1][net.k - 1]);
            LVec pre = mv(net.w[l], rec);
            if (!net.generic) {
                const LVec vx = mv(net.v[l], x[t]);
                for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += vx[i];
            } else if (l == 0) {
                const LVec vx = mv(net.v[0], x[t]);
                for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += vx[i];
            }
            if (l > 0) {
                const LVec sh = mv(net.s[l - 1], h[t][l - 1]);
                for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += sh[i];
            }
            LVec out(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) out[i] = soft1(pre[i], net.b[l][i]);
            h[t].push_back(std::move(out));
        }
        const LVec y_hat = mv(net.u, h[t][net.k - 1]);
        for (std::size_t i = 0; i < y_hat.size(); ++i) {
            const long double d = (y_hat[i] + net.c[i]) - y[t][i];
            acc += d * d;
        }
        count += y[t].size();
    }
    return count == 0 ? 0.0L : acc / static_cast<long double>(count);
}

// Rebuilds the network from a flat parameter vector, mirroring the layout of
// pack_params for each parameterization.
struct FlatReader {
    const LVec& flat;
    std::size_t pos = 0;
    LMat mat(std::size_t r, std::size_t c) {
        LMat m(r, c);
        for (auto& x : m.a) x = flat[pos++];
        return m;
    }
    LVec vec(std::size_t n) {
        LVec v(n);
        for (auto& x : v) x = flat[pos++];
        return v;
    }
    long double scalar() { return flat[pos++]; }
};

inline LNet net_from_flat(TrainMode mode, const LVec& flat, std::size_t n, std::size_t m,
                          std::size_t k) {
    FlatReader r{flat};
    LNet net;
    net.n = n;
    net.m = m;
    net.k = k;
    if (mode == TrainMode::generic) {
        net.generic = true;
        for (std::size_t l = 0; l < k; ++l) net.w.push_back(r.mat(n, n));
        net.v.push_back(r.mat(n, m));
        for (std::size_t l = 1; l < k; ++l) net.s.push_back(r.mat(n, n));
        net.u = r.mat(n, n);
        net.c = r.vec(n);
        for (std::size_t l = 0; l < k; ++l) net.b.push_back(r.vec(n));
        for (std::size_t l = 0; l < k; ++l) net.h0.push_back(r.vec(n));
    } else if (mode == TrainMode::untied_sista) {
        for (std::size_t l = 0; l < k; ++l) {
            const LMat a_mat = r.mat(m, n);
            const LMat d_mat = r.mat(n, n);
            const LMat f_mat = r.mat(n, n);
            const long double alpha = r.scalar();
            const long double l1 = r.scalar();
            const long double l2 = r.scalar();
            const LLayer lay = map_layer(a_mat, d_mat, f_mat, alpha, l1, l2, l == 0);
            net.w.push_back(lay.w);
            net.v.push_back(lay.v);
            if (l > 0) net.s.push_back(lay.s);
            net.b.push_back(LVec(n, lay.b));
            if (l == k - 1) net.u = d_mat;
        }
        net.h0.push_back(r.vec(n));
        net.c = LVec(n, 0.0L);
    } else {
        const LMat a_mat = r.mat(m, n);
        const LMat d_mat = r.mat(n, n);
        const LMat f_mat = r.mat(n, n);
        const LVec h0 = r.vec(n);
        const long double alpha = r.scalar();
        const long double l1 = r.scalar();
        const long double l2 = r.scalar();
        const LLayer first = map_layer(a_mat, d_mat, f_mat, alpha, l1, l2, true);
        const LLayer rest = k > 1 ? map_layer(a_mat, d_mat, f_mat, alpha, l1, l2, false)
                                  : LLayer{};
        for (std::size_t l = 0; l < k; ++l) {
            net.w.push_back(l == 0 ? first.w : rest.w);
            net.v.push_back(first.v);
            if (l > 0) net.s.push_back(rest.s);
            net.b.push_back(LVec(n, first.b));
        }
        net.u = d_mat;
        net.h0.push_back(h0);
        net.c = LVec(n, 0.0L);
    }
    require(r.pos == flat.size(), "gradcheck oracle: flat layout mismatch");
    return net;
}

}  // namespace ldo

namespace detail {

// True when every pre-activation is at least `margin` away from its
// threshold kink (and from the discontinuity at zero, relevant for b < 0).
inline bool clear_of_kinks(const StackedRnnParams& net, const std::vector<DenseVector>& x_seq,
                           double margin) {
    const ForwardResult fwd = forward(net, x_seq);
    for (std::size_t t = 0; t < fwd.tape.pre.size(); ++t)
        for (std::size_t l = 0; l < fwd.tape.pre[t].size(); ++l) {
            const DenseVector& pre = fwd.tape.pre[t][l];
            const DenseVector& b = net.b[l];
            for (std::size_t i = 0; i < pre.size(); ++i) {
                if (std::abs(std::abs(pre[i]) - b[i]) <= margin) return false;
                if (b[i] < 0.0 && std::abs(pre[i]) <= margin) return false;
            }
        }
    return true;
}

inline const char* mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::generic: return "generic";
        case TrainMode::untied_sista: return "untied_sista";
        default: return "tied_sista";
    }
}

}  // namespace detail

// Checks one parameterization on one instance. Returns the worst per-block
// relative error ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||, 1e-8).
inline double gradcheck_instance(TrainMode mode, const GradCheckConfig& cfg,
                                 std::uint64_t instance_seed, bool* accepted,
                                 std::string* worst_block = nullptr) {
    // Instance: solver parameters, observations, and targets. The dense
    // ensemble keeps every mapping derivative nonzero.
    const SistaParams base = random_sista_params_dense(
        cfg.n, cfg.m, instance_seed, InstanceRanges{1.0, 4.0, 0.01, 0.5, 0.01, 0.5});
    const std::vector<DenseVector> x_seq = random_observations(cfg.t_len, cfg.m, instance_seed);
    SplitMix64 rng = derive_stream(instance_seed, 13);
    std::vector<DenseVector> y_seq;
    for (std::size_t t = 0; t < cfg.t_len; ++t)
        y_seq.push_back(random_gaussian_vector(cfg.n, rng));

    TrainConfig tc;
    tc.mode = mode;
    tc.init = (mode == TrainMode::generic) ? InitScheme::random : InitScheme::sista;
    tc.k_layers = cfg.k;
    tc.seed = instance_seed;
    TrainableParams params = init_params(tc, cfg.n, cfg.m, base);

    const StackedRnnParams net = materialize(params);
    if (!detail::clear_of_kinks(net, x_seq, cfg.kink_margin)) {
        *accepted = false;
        return 0.0;
    }
    *accepted = true;

    // Analytic gradients.
    const ForwardResult fwd = forward(net, x_seq);
    const MseLossResult loss = mse_loss(fwd.y_hat, y_seq);
    ModeGrads mode_grads;
    if (const auto* u = std::get_if<UntiedSistaParams>(&params)) {
        mode_grads = backward_untied(*u, fwd.tape, loss.grad);
    } else if (const auto* t = std::get_if<TiedSistaNet>(&params)) {
        mode_grads = backward_tied(*t, fwd.tape, loss.grad);
    } else {
        mode_grads = backward_rnn(net, fwd.tape, loss.grad);
    }
    std::vector<double> ga = pack_grads(params, mode_grads, /*log_alpha=*/false);
    if (cfg.inject_sign_flip && !ga.empty()) ga[0] = -ga[0] - 1.0;

    FlatLayout layout;
    const std::vector<double> flat = pack_params(params, /*log_alpha=*/false, layout);

    // Central differences through the extended-precision forward oracle.
    std::vector<ldo::LVec> x_ld, y_ld;
    for (const auto& v : x_seq) x_ld.emplace_back(v.begin(), v.end());
    for (const auto& v : y_seq) y_ld.emplace_back(v.begin(), v.end());
    ldo::LVec flat_ld(flat.begin(), flat.end());
    const long double h = static_cast<long double>(cfg.step);
    std::vector<double> gfd(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const long double save = flat_ld[i];
        flat_ld[i] = save + h;
        const long double fp =
            ldo::forward_mse(ldo::net_from_flat(mode, flat_ld, cfg.n, cfg.m, cfg.k), x_ld, y_ld);
        flat_ld[i] = save - h;
        const long double fm =
            ldo::forward_mse(ldo::net_from_flat(mode, flat_ld, cfg.n, cfg.m, cfg.k), x_ld, y_ld);
        flat_ld[i] = save;
        gfd[i] = static_cast<double>((fp - fm) / (2.0L * h));
    }

    double worst = 0.0;
    for (const auto& seg : layout.segments) {
        double na = 0.0, nf = 0.0, nd = 0.0;
        for (std::size_t i = seg.offset; i < seg.offset + seg.count; ++i) {
            na += ga[i] * ga[i];
            nf += gfd[i] * gfd[i];
            const double d = ga[i] - gfd[i];
            nd += d * d;
        }
        const double rel =
            std::sqrt(nd) / std::max(std::max(std::sqrt(na), std::sqrt(nf)), 1e-8);
        if (rel > worst) {
            worst = rel;
            if (worst_block) *worst_block = seg.name;
        }
    }
    return worst;
}

// Runs the configured number of accepted instances for each of the three
// parameterizations, resampling seeds rejected by the kink margin.
inline GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
    GradCheckReport rep;
    for (TrainMode mode :
         {TrainMode::generic, TrainMode::untied_sista, TrainMode::tied_sista}) {
        GradCheckReport::ModeResult mr;
        mr.mode = detail::mode_name(mode);
        std::uint64_t draw = 0;
        while (mr.instances_checked < cfg.instances) {
            bool accepted = false;
            std::string block;
            const double rel = gradcheck_instance(
                mode, cfg, SplitMix64::mix(cfg.seed) + draw, &accepted, &block);
            ++draw;
            if (!accepted) {
                ++mr.instances_skipped;
                require(mr.instances_skipped < 1000 + 10 * cfg.instances,
                        "run_gradcheck: too many instances rejected by the kink margin");
                continue;
            }
            ++mr.instances_checked;
            if (rel > mr.max_rel_err) {
                mr.max_rel_err = rel;
                mr.worst_block = block;
            }
        }
        rep.max_rel_err = std::max(rep.max_rel_err, mr.max_rel_err);
        rep.modes.push_back(std::move(mr));
    }
    rep.pass = rep.max_rel_err < cfg.tol;
    return rep;
}

}  // namespace ssr
