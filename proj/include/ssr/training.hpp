// Supervised training of the unfolded networks: MSE loss, Glorot and
// solver-based initialization, SGD and RMSProp on a flattened parameter
// vector, and a deterministic minibatch loop.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ssr/datagen.hpp"
#include "ssr/rng.hpp"
#include "ssr/unfolded.hpp"

namespace ssr {

enum class TrainMode { generic, untied_sista, tied_sista };
enum class InitScheme { sista, random };
enum class OptimizerKind { sgd, rmsprop };

// Default regularization weights; the tuned values from the appendix-style
// hyperparameter search. The alternative preset (0.5, 1.0) is documented in
// the README and selectable through configuration.
inline constexpr double kDefaultLambda1 = 0.02;
inline constexpr double kDefaultLambda2 = 0.002;

struct TrainConfig {
    TrainMode mode = TrainMode::tied_sista;
    InitScheme init = InitScheme::sista;
    std::size_t k_layers = 3;
    double lr = 1e-4;
    std::size_t batch_size = 50;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::rmsprop;
    double rmsprop_momentum = 0.9;
    double rmsprop_avg = 0.1;
    bool clamp_lambda2_nonneg = false;
    bool log_alpha = false;  // optimize log(alpha) instead of alpha
    std::set<std::string> freeze;  // parameter names to hold fixed
};

inline void validate(const TrainConfig& cfg) {
    require(cfg.k_layers >= 1, "TrainConfig: k_layers must be >= 1");
    require(cfg.lr >= 0.0, "TrainConfig: learning rate must be nonnegative");
    require(cfg.batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(cfg.epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(cfg.rmsprop_avg > 0.0 && cfg.rmsprop_avg <= 1.0, "TrainConfig: rmsprop_avg in (0,1]");
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct MseLossResult {
    double loss = 0.0;
    std::vector<DenseVector> grad;  // dloss/dy_hat_t
};

// loss = (1/(T N)) sum_t ||y_hat_t - y_t||^2; grad = (2/(T N)) (y_hat_t - y_t).
inline MseLossResult mse_loss(const std::vector<DenseVector>& y_hat_seq,
                              const std::vector<DenseVector>& y_seq) {
    require(y_hat_seq.size() == y_seq.size(), "mse_loss: sequence length mismatch");
    MseLossResult res;
    std::size_t count = 0;
    for (std::size_t t = 0; t < y_seq.size(); ++t) {
        require(y_hat_seq[t].size() == y_seq[t].size(), "mse_loss: vector length mismatch");
        count += y_seq[t].size();
    }
    if (count == 0) return res;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t t = 0; t < y_seq.size(); ++t) {
        DenseVector g(y_seq[t].size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = y_hat_seq[t][i] - y_seq[t][i];
            res.loss += d * d * inv;
            g[i] = 2.0 * d * inv;
        }
        res.grad.push_back(std::move(g));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Flat parameter vector
// ---------------------------------------------------------------------------

using TrainableParams = std::variant<StackedRnnParams, UntiedSistaParams, TiedSistaNet>;

struct FlatLayout {
    struct Segment {
        std::string name;  // e.g. "A", "D.2", "lambda2", "W.1"
        std::size_t offset = 0;
        std::size_t count = 0;
    };
    std::vector<Segment> segments;
    std::size_t total = 0;

    void push(const std::string& name, std::size_t count) {
        segments.push_back({name, total, count});
        total += count;
    }
};

// Segment base name: everything before the first '.', so a freeze entry "A"
// covers "A", "A.1", "A.2", ...
inline std::string segment_base(const std::string& name) {
    const auto dot = name.find('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

namespace detail {

inline void append_mat(std::vector<double>& flat, FlatLayout& lay, const std::string& name,
                       const DenseMatrix& m) {
    lay.push(name, m.data.size());
    flat.insert(flat.end(), m.data.begin(), m.data.end());
}

inline void append_vec(std::vector<double>& flat, FlatLayout& lay, const std::string& name,
                       const DenseVector& v) {
    lay.push(name, v.size());
    flat.insert(flat.end(), v.begin(), v.end());
}

inline void append_scalar(std::vector<double>& flat, FlatLayout& lay, const std::string& name,
                          double s) {
    lay.push(name, 1);
    flat.push_back(s);
}

inline void take_mat(const std::vector<double>& flat, std::size_t& pos, DenseMatrix& m) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + m.data.size()), m.data.begin());
    pos += m.data.size();
}

inline void take_vec(const std::vector<double>& flat, std::size_t& pos, DenseVector& v) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + v.size()), v.begin());
    pos += v.size();
}

}  // namespace detail

// Packs trainable parameters into one flat vector. The segment order below
// is the documented draw order for random initialization as well. With
// log_alpha set, alpha segments hold log(alpha).
inline std::vector<double> pack_params(const TrainableParams& params, bool log_alpha,
                                       FlatLayout& layout) {
    std::vector<double> flat;
    layout = FlatLayout{};
    const auto alpha_store = [&](double a) {
        if (!log_alpha) return a;
        require(a > 0.0, "pack_params: log_alpha requires positive alpha");
        return std::log(a);
    };
    if (const auto* g = std::get_if<StackedRnnParams>(&params)) {
        for (std::size_t l = 0; l < g->k; ++l)
            detail::append_mat(flat, layout, "W." + std::to_string(l + 1), g->W[l]);
        detail::append_mat(flat, layout, "V.1", g->V[0]);
        for (std::size_t l = 0; l < g->S.size(); ++l)
            detail::append_mat(flat, layout, "S." + std::to_string(l + 2), g->S[l]);
        detail::append_mat(flat, layout, "U", g->U);
        detail::append_vec(flat, layout, "c", g->c);
        for (std::size_t l = 0; l < g->k; ++l)
            detail::append_vec(flat, layout, "b." + std::to_string(l + 1), g->b[l]);
        for (std::size_t l = 0; l < g->h0.size(); ++l)
            detail::append_vec(flat, layout, "h0." + std::to_string(l + 1), g->h0[l]);
    } else if (const auto* u = std::get_if<UntiedSistaParams>(&params)) {
        for (std::size_t l = 0; l < u->layers.size(); ++l) {
            const std::string sfx = "." + std::to_string(l + 1);
            detail::append_mat(flat, layout, "A" + sfx, u->layers[l].A);
            detail::append_mat(flat, layout, "D" + sfx, u->layers[l].D);
            detail::append_mat(flat, layout, "F" + sfx, u->layers[l].F);
            detail::append_scalar(flat, layout, "alpha" + sfx, alpha_store(u->layers[l].alpha));
            detail::append_scalar(flat, layout, "lambda1" + sfx, u->layers[l].lambda1);
            detail::append_scalar(flat, layout, "lambda2" + sfx, u->layers[l].lambda2);
        }
        detail::append_vec(flat, layout, "h0", u->h0);
    } else {
        const auto& t = std::get<TiedSistaNet>(params);
        detail::append_mat(flat, layout, "A", t.params.A);
        detail::append_mat(flat, layout, "D", t.params.D);
        detail::append_mat(flat, layout, "F", t.params.F);
        detail::append_vec(flat, layout, "h0", t.params.h0);
        detail::append_scalar(flat, layout, "alpha", alpha_store(t.params.alpha));
        detail::append_scalar(flat, layout, "lambda1", t.params.lambda1);
        detail::append_scalar(flat, layout, "lambda2", t.params.lambda2);
    }
    return flat;
}

// Writes a flat vector back into the parameter structure (shapes unchanged).
inline void unpack_params(const std::vector<double>& flat, bool log_alpha,
                          TrainableParams& params) {
    std::size_t pos = 0;
    const auto alpha_load = [&](double stored) { return log_alpha ? std::exp(stored) : stored; };
    if (auto* g = std::get_if<StackedRnnParams>(&params)) {
        for (auto& w : g->W) detail::take_mat(flat, pos, w);
        detail::take_mat(flat, pos, g->V[0]);
        for (auto& s : g->S) detail::take_mat(flat, pos, s);
        detail::take_mat(flat, pos, g->U);
        detail::take_vec(flat, pos, g->c);
        for (auto& b : g->b) detail::take_vec(flat, pos, b);
        for (auto& h : g->h0) detail::take_vec(flat, pos, h);
    } else if (auto* u = std::get_if<UntiedSistaParams>(&params)) {
        for (auto& l : u->layers) {
            detail::take_mat(flat, pos, l.A);
            detail::take_mat(flat, pos, l.D);
            detail::take_mat(flat, pos, l.F);
            l.alpha = alpha_load(flat[pos++]);
            l.lambda1 = flat[pos++];
            l.lambda2 = flat[pos++];
        }
        detail::take_vec(flat, pos, u->h0);
    } else {
        auto& t = std::get<TiedSistaNet>(params);
        detail::take_mat(flat, pos, t.params.A);
        detail::take_mat(flat, pos, t.params.D);
        detail::take_mat(flat, pos, t.params.F);
        detail::take_vec(flat, pos, t.params.h0);
        t.params.alpha = alpha_load(flat[pos++]);
        t.params.lambda1 = flat[pos++];
        t.params.lambda2 = flat[pos++];
    }
    require(pos == flat.size(), "unpack_params: length mismatch");
}

using ModeGrads = std::variant<RnnGrads, UntiedSistaGrads, SistaGrads>;

// Flattens gradients in the same order as pack_params. With log_alpha, the
// chain rule d/d(log a) = a * d/da is applied using the current alpha.
inline std::vector<double> pack_grads(const TrainableParams& params, const ModeGrads& grads,
                                      bool log_alpha) {
    std::vector<double> flat;
    FlatLayout lay;
    if (const auto* g = std::get_if<RnnGrads>(&grads)) {
        for (std::size_t l = 0; l < g->W.size(); ++l)
            detail::append_mat(flat, lay, "", g->W[l]);
        detail::append_mat(flat, lay, "", g->V[0]);
        for (const auto& s : g->S) detail::append_mat(flat, lay, "", s);
        detail::append_mat(flat, lay, "", g->U);
        detail::append_vec(flat, lay, "", g->c);
        for (const auto& b : g->b) detail::append_vec(flat, lay, "", b);
        for (const auto& h : g->h0) detail::append_vec(flat, lay, "", h);
    } else if (const auto* u = std::get_if<UntiedSistaGrads>(&grads)) {
        const auto& up = std::get<UntiedSistaParams>(params);
        for (std::size_t l = 0; l < u->layers.size(); ++l) {
            detail::append_mat(flat, lay, "", u->layers[l].A);
            detail::append_mat(flat, lay, "", u->layers[l].D);
            detail::append_mat(flat, lay, "", u->layers[l].F);
            const double ga = u->layers[l].alpha;
            detail::append_scalar(flat, lay, "", log_alpha ? ga * up.layers[l].alpha : ga);
            detail::append_scalar(flat, lay, "", u->layers[l].lambda1);
            detail::append_scalar(flat, lay, "", u->layers[l].lambda2);
        }
        detail::append_vec(flat, lay, "", u->h0);
    } else {
        const auto& t = std::get<SistaGrads>(grads);
        const auto& tp = std::get<TiedSistaNet>(params);
        detail::append_mat(flat, lay, "", t.A);
        detail::append_mat(flat, lay, "", t.D);
        detail::append_mat(flat, lay, "", t.F);
        detail::append_vec(flat, lay, "", t.h0);
        detail::append_scalar(flat, lay, "", log_alpha ? t.alpha * tp.params.alpha : t.alpha);
        detail::append_scalar(flat, lay, "", t.lambda1);
        detail::append_scalar(flat, lay, "", t.lambda2);
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

// Glorot/Bengio uniform: entries on +-sqrt(6 / (fan_in + fan_out)).
inline DenseMatrix glorot(std::size_t rows, std::size_t cols, SplitMix64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    DenseMatrix m(rows, cols);
    for (double& x : m.data) x = rng.next_uniform_sym(bound);
    return m;
}

}  // namespace detail

// Builds the initial trainable parameters. Random initialization draws each
// weight matrix Glorot-uniform (in pack_params segment order) and zeroes the
// vectors; solver initialization reuses `base` exactly, so the untrained
// network reproduces the solver output. Random solver-parameterization
// scalars start at alpha = 1 and the default lambdas.
inline TrainableParams init_params(const TrainConfig& cfg, std::size_t n, std::size_t m,
                                   const std::optional<SistaParams>& base) {
    validate(cfg);
    if (cfg.init == InitScheme::sista)
        require(base.has_value(), "init_params: sista initialization requires base parameters");

    const std::size_t k = cfg.k_layers;
    if (cfg.mode == TrainMode::tied_sista) {
        if (cfg.init == InitScheme::sista) return TiedSistaNet{*base, k};
        SplitMix64 rng = derive_stream(cfg.seed, 1);
        SistaParams p;
        p.A = detail::glorot(m, n, rng);
        p.D = detail::glorot(n, n, rng);
        p.F = detail::glorot(n, n, rng);
        p.h0 = DenseVector(n, 0.0);
        p.alpha = 1.0;
        p.lambda1 = kDefaultLambda1;
        p.lambda2 = kDefaultLambda2;
        return TiedSistaNet{std::move(p), k};
    }
    if (cfg.mode == TrainMode::untied_sista) {
        UntiedSistaParams up;
        if (cfg.init == InitScheme::sista) {
            for (std::size_t l = 0; l < k; ++l)
                up.layers.push_back({base->A, base->D, base->F, base->alpha, base->lambda1,
                                     base->lambda2});
            up.h0 = base->h0;
            return up;
        }
        SplitMix64 rng = derive_stream(cfg.seed, 1);
        for (std::size_t l = 0; l < k; ++l) {
            UntiedSistaLayer lay;
            lay.A = detail::glorot(m, n, rng);
            lay.D = detail::glorot(n, n, rng);
            lay.F = detail::glorot(n, n, rng);
            lay.alpha = 1.0;
            lay.lambda1 = kDefaultLambda1;
            lay.lambda2 = kDefaultLambda2;
            up.layers.push_back(std::move(lay));
        }
        up.h0 = DenseVector(n, 0.0);
        return up;
    }
    // Generic structural parameterization.
    if (cfg.init == InitScheme::sista) {
        StackedRnnParams p = map_sista_to_rnn(*base, k);
        p.connectivity = Connectivity::generic;
        p.h0.assign(k, base->h0);  // one copy per layer
        return p;
    }
    SplitMix64 rng = derive_stream(cfg.seed, 1);
    StackedRnnParams p;
    p.connectivity = Connectivity::generic;
    p.n = n;
    p.m = m;
    p.k = k;
    for (std::size_t l = 0; l < k; ++l) p.W.push_back(detail::glorot(n, n, rng));
    p.V.push_back(detail::glorot(n, m, rng));
    for (std::size_t l = 1; l < k; ++l) p.S.push_back(detail::glorot(n, n, rng));
    p.U = detail::glorot(n, n, rng);
    p.c = DenseVector(n, 0.0);
    p.b.assign(k, DenseVector(n, 0.0));
    p.h0.assign(k, DenseVector(n, 0.0));
    return p;
}

// ---------------------------------------------------------------------------
// Optimizers (pure steps on flat vectors)
// ---------------------------------------------------------------------------

struct RmsPropState {
    std::vector<double> acc;  // running average of squared gradients
    std::vector<double> vel;  // momentum velocity
};

inline RmsPropState make_rmsprop_state(std::size_t size) {
    return RmsPropState{std::vector<double>(size, 0.0), std::vector<double>(size, 0.0)};
}

// a <- (1-avg) a + avg g^2 ; v <- momentum v - lr g / sqrt(a + 1e-8) ; p <- p + v
inline std::pair<std::vector<double>, RmsPropState> rmsprop_step(
    std::vector<double> params, const std::vector<double>& grads, RmsPropState state,
    double lr, double momentum, double avg) {
    require(params.size() == grads.size() && state.acc.size() == params.size() &&
                state.vel.size() == params.size(),
            "rmsprop_step: size mismatch");
    constexpr double eps = 1e-8;
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.acc[i] = (1.0 - avg) * state.acc[i] + avg * grads[i] * grads[i];
        state.vel[i] = momentum * state.vel[i] - lr * grads[i] / std::sqrt(state.acc[i] + eps);
        params[i] += state.vel[i];
    }
    return {std::move(params), std::move(state)};
}

inline std::vector<double> sgd_step(std::vector<double> params,
                                    const std::vector<double>& grads, double lr) {
    require(params.size() == grads.size(), "sgd_step: size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
    return params;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct Dataset {
    std::vector<SequenceSample> train, val, test;
};

struct TrainReport {
    double epoch0_val_mse = 0.0;    // validation MSE before any update
    double epoch0_train_mse = 0.0;  // training-set MSE before any update
    std::vector<double> train_loss;  // per completed epoch
    std::vector<double> val_mse;     // per completed epoch
    std::vector<double> seconds;     // wall time per epoch; terminal-only output
    std::size_t best_epoch = 0;      // 0 = untrained parameters
    double best_val_mse = 0.0;
    std::size_t epochs_completed = 0;
    bool diverged = false;
};

struct TrainOutcome {
    TrainReport report;
    TrainableParams final_params;
    TrainableParams best_params;  // lowest validation MSE, epoch 0 included
};

// CSV export of the learning curves (RFC-4180-style, LF line endings, full
// round-trip precision). The epoch-0 row holds the pre-training losses. Wall
// times are excluded by default so the file is byte-identical across reruns.
inline std::string train_report_csv(const TrainReport& rep, bool include_seconds = false) {
    const auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::string csv = include_seconds ? "epoch,train_loss,val_mse,seconds\n"
                                      : "epoch,train_loss,val_mse\n";
    csv += "0," + num(rep.epoch0_train_mse) + "," + num(rep.epoch0_val_mse);
    if (include_seconds) csv += ",0";
    csv += "\n";
    for (std::size_t e = 0; e < rep.epochs_completed; ++e) {
        csv += std::to_string(e + 1) + "," + num(rep.train_loss[e]) + "," +
               num(rep.val_mse[e]);
        if (include_seconds) csv += "," + num(rep.seconds[e]);
        csv += "\n";
    }
    return csv;
}

// The structural network actually run for the current parameters.
inline StackedRnnParams materialize(const TrainableParams& params) {
    if (const auto* g = std::get_if<StackedRnnParams>(&params)) return *g;
    if (const auto* u = std::get_if<UntiedSistaParams>(&params)) return untied_to_rnn(*u);
    const auto& t = std::get<TiedSistaNet>(params);
    return map_sista_to_rnn(t.params, t.k);
}

inline double evaluate_mse(const StackedRnnParams& net,
                           const std::vector<SequenceSample>& samples) {
    double acc = 0.0;
    for (const auto& s : samples) acc += mse(forward(net, s.x_seq).y_hat, s.y_seq);
    return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

namespace detail {

inline void add_inplace(RnnGrads& acc, const RnnGrads& g) {
    for (std::size_t i = 0; i < acc.h0.size(); ++i) axpy(1.0, g.h0[i], acc.h0[i]);
    for (std::size_t i = 0; i < acc.b.size(); ++i) axpy(1.0, g.b[i], acc.b[i]);
    for (std::size_t i = 0; i < acc.W.size(); ++i) acc.W[i] = add(acc.W[i], g.W[i]);
    for (std::size_t i = 0; i < acc.V.size(); ++i) acc.V[i] = add(acc.V[i], g.V[i]);
    for (std::size_t i = 0; i < acc.S.size(); ++i) acc.S[i] = add(acc.S[i], g.S[i]);
    acc.U = add(acc.U, g.U);
    axpy(1.0, g.c, acc.c);
}

inline RnnGrads zero_grads_like(const StackedRnnParams& p) {
    RnnGrads g;
    g.h0.assign(p.h0.size(), DenseVector(p.n, 0.0));
    g.b.assign(p.k, DenseVector(p.n, 0.0));
    g.W.assign(p.k, DenseMatrix(p.n, p.n));
    g.V.assign(p.V.size(), DenseMatrix(p.n, p.m));
    g.S.assign(p.S.size(), DenseMatrix(p.n, p.n));
    g.U = DenseMatrix(p.n, p.n);
    g.c = DenseVector(p.n, 0.0);
    return g;
}

inline void scale_inplace(std::vector<double>& v, double s) {
    for (double& x : v) x *= s;
}

// Seeded Fisher-Yates permutation of 0..count-1.
inline std::vector<std::size_t> shuffled_indices(std::size_t count, SplitMix64 rng) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    for (std::size_t i = count; i > 1; --i) {
        const std::size_t j = rng.next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace detail

// Runs the full training loop. Deterministic for a fixed (dataset, cfg,
// base): seeded shuffles, gradient accumulation ordered by sample index,
// single-threaded reduction. Aborts with report.diverged on NaN/Inf loss.
inline TrainOutcome train(const Dataset& data, const TrainConfig& cfg,
                          const std::optional<SistaParams>& base = std::nullopt) {
    validate(cfg);
    require(!data.train.empty(), "train: empty training set");
    require(!data.val.empty(), "train: empty validation set");
    require(!data.train[0].y_seq.empty(), "train: empty sequences");
    const std::size_t n = data.train[0].y_seq[0].size();
    const std::size_t m = data.train[0].x_seq[0].size();

    TrainOutcome out;
    out.final_params = init_params(cfg, n, m, base);

    FlatLayout layout;
    std::vector<double> flat = pack_params(out.final_params, cfg.log_alpha, layout);

    // Frozen index ranges and lambda2 positions for the optional clamp.
    std::vector<std::pair<std::size_t, std::size_t>> frozen, lambda2_segs;
    for (const auto& seg : layout.segments) {
        if (cfg.freeze.count(segment_base(seg.name)) || cfg.freeze.count(seg.name))
            frozen.push_back({seg.offset, seg.count});
        if (segment_base(seg.name) == "lambda2") lambda2_segs.push_back({seg.offset, seg.count});
    }

    RmsPropState opt_state = make_rmsprop_state(flat.size());

    TrainReport& rep = out.report;
    rep.epoch0_val_mse = evaluate_mse(materialize(out.final_params), data.val);
    rep.epoch0_train_mse = evaluate_mse(materialize(out.final_params), data.train);
    rep.best_epoch = 0;
    rep.best_val_mse = rep.epoch0_val_mse;
    out.best_params = out.final_params;

    const std::size_t ntrain = data.train.size();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        const std::vector<std::size_t> order =
            detail::shuffled_indices(ntrain, derive_stream(cfg.seed, 1000000 + epoch));
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < ntrain; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, ntrain);
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            std::sort(batch.begin(), batch.end());  // reduce in sample-index order

            const StackedRnnParams net = materialize(out.final_params);
            RnnGrads acc = detail::zero_grads_like(net);
            double batch_loss = 0.0;
            for (const std::size_t idx : batch) {
                const SequenceSample& s = data.train[idx];
                const ForwardResult fwd = forward(net, s.x_seq);
                const MseLossResult l = mse_loss(fwd.y_hat, s.y_seq);
                batch_loss += l.loss;
                detail::add_inplace(acc, backward_rnn(net, fwd.tape, l.grad));
            }
            loss_sum += batch_loss;
            if (!std::isfinite(batch_loss)) {
                rep.diverged = true;
                return out;
            }

            ModeGrads mode_grads;
            if (std::holds_alternative<StackedRnnParams>(out.final_params)) {
                mode_grads = std::move(acc);
            } else if (const auto* u = std::get_if<UntiedSistaParams>(&out.final_params)) {
                mode_grads = chain_untied(*u, acc);
            } else {
                const auto& t = std::get<TiedSistaNet>(out.final_params);
                mode_grads = chain_tied(t.params, t.k, acc);
            }
            std::vector<double> grads = pack_grads(out.final_params, mode_grads, cfg.log_alpha);
            detail::scale_inplace(grads, 1.0 / static_cast<double>(batch.size()));
            for (const auto& [off, cnt] : frozen)
                std::fill(grads.begin() + static_cast<std::ptrdiff_t>(off),
                          grads.begin() + static_cast<std::ptrdiff_t>(off + cnt), 0.0);

            if (cfg.optimizer == OptimizerKind::rmsprop) {
                auto stepped = rmsprop_step(std::move(flat), grads, std::move(opt_state),
                                            cfg.lr, cfg.rmsprop_momentum, cfg.rmsprop_avg);
                flat = std::move(stepped.first);
                opt_state = std::move(stepped.second);
            } else {
                flat = sgd_step(std::move(flat), grads, cfg.lr);
            }
            if (cfg.clamp_lambda2_nonneg)
                for (const auto& [off, cnt] : lambda2_segs)
                    for (std::size_t i = off; i < off + cnt; ++i)
                        flat[i] = std::max(0.0, flat[i]);
            unpack_params(flat, cfg.log_alpha, out.final_params);
        }

        const double epoch_loss = loss_sum / static_cast<double>(ntrain);
        const double vmse = evaluate_mse(materialize(out.final_params), data.val);
        if (!std::isfinite(epoch_loss) || !std::isfinite(vmse)) {
            rep.diverged = true;
            return out;
        }
        rep.train_loss.push_back(epoch_loss);
        rep.val_mse.push_back(vmse);
        rep.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());
        rep.epochs_completed = epoch;
        if (vmse < rep.best_val_mse) {
            rep.best_val_mse = vmse;
            rep.best_epoch = epoch;
            out.best_params = out.final_params;
        }
    }
    return out;
}

}  // namespace ssr
