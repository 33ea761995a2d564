// Command-line entry point for the sequential sparse recovery toolkit.
//
// Usage: ssr <command> <config-file>
// Commands: datagen, recover, train, gradcheck, equiv, eval.
//
// All numeric settings live in the config file so an experiment is fully
// described by its config; the command line only selects what to run. Every
// command is a pure function of (config, input files): output files are
// byte-identical across reruns. Wall-clock timings go to the terminal only.
//
// Exit codes: 0 success, 1 validation failure (gradcheck/equiv), 2 bad
// config, 3 I/O error, 4 numerical divergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssr/ssr.hpp"

namespace fs = std::filesystem;
using namespace ssr;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string zero_pad(std::size_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

// One sequence sample is stored as a checkpoint container of kind
// "sequence_sample" with matrices x (M x T), y (N x T), h (N x T; may be
// absent for image-derived samples).
void write_sample(const fs::path& path, const SequenceSample& s) {
    Checkpoint c;
    c.kind = "sequence_sample";
    c.k = s.y_seq.size();
    c.n = s.y_seq.empty() ? 0 : s.y_seq[0].size();
    c.m = s.x_seq.empty() ? 0 : s.x_seq[0].size();
    c.matrices.emplace_back("x", matrix_from_columns(s.x_seq));
    c.matrices.emplace_back("y", matrix_from_columns(s.y_seq));
    if (!s.h_seq.empty()) c.matrices.emplace_back("h", matrix_from_columns(s.h_seq));
    write_checkpoint(path, c);
}

SequenceSample read_sample(const fs::path& path) {
    const Checkpoint c = read_checkpoint(path);
    if (c.kind != "sequence_sample") throw IoError(path.string() + ": not a sample file");
    SequenceSample s;
    s.x_seq = columns_of(c.matrix("x"));
    s.y_seq = columns_of(c.matrix("y"));
    for (const auto& [name, m] : c.matrices)
        if (name == "h") s.h_seq = columns_of(m);
    return s;
}

std::vector<SequenceSample> load_split(const fs::path& dir, const std::string& split) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind(split + "_", 0) == 0 && name.size() > 7 &&
            name.substr(name.size() - 7) == ".sample")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<SequenceSample> out;
    for (const auto& f : files) out.push_back(read_sample(f));
    return out;
}

struct LoadedDataset {
    DenseMatrix A, D, F;
    Dataset data;
};

LoadedDataset load_dataset(const fs::path& dir) {
    LoadedDataset d;
    d.A = read_ssr1(dir / "A.ssr1");
    d.D = read_ssr1(dir / "D.ssr1");
    d.F = read_ssr1(dir / "F.ssr1");
    d.data.train = load_split(dir, "train");
    d.data.val = load_split(dir, "val");
    d.data.test = load_split(dir, "test");
    return d;
}

SistaParams base_params_from(const LoadedDataset& d, const RunConfig& cfg) {
    SistaParams p;
    p.A = d.A;
    p.D = d.D;
    p.F = d.F;
    p.h0 = DenseVector(d.D.rows, 0.0);
    p.alpha = cfg.get_double_or("alpha", 1.0);
    p.lambda1 = cfg.get_double_or("lambda1", kDefaultLambda1);
    p.lambda2 = cfg.get_double_or("lambda2", kDefaultLambda2);
    return p;
}

// ---------------------------------------------------------------------------
// datagen
// ---------------------------------------------------------------------------

DictionaryKind parse_dict(const std::string& s) {
    if (s == "identity") return DictionaryKind::identity;
    if (s == "haar") return DictionaryKind::haar;
    if (s == "daubechies8") return DictionaryKind::daubechies8;
    throw ConfigError("unknown dictionary kind '" + s + "'");
}

int cmd_datagen(const RunConfig& cfg) {
    cfg.require_known({"out_dir", "m", "n", "t", "seed", "train_count", "val_count",
                       "test_count", "sigma2", "nu1", "nu2", "dict", "levels", "image"});
    const fs::path out_dir = cfg.get_str("out_dir");
    const std::size_t m = cfg.get_size("m");
    const std::size_t n = cfg.get_size("n");
    const std::uint64_t seed = cfg.get_u64_or("seed", 0);
    const double sigma2 = cfg.get_double_or("sigma2", 0.0);
    const double nu1 = cfg.get_double_or("nu1", 2.5);
    const double nu2 = cfg.get_double_or("nu2", 4.0);
    const std::string dict = cfg.get_str_or("dict", "haar");
    const std::size_t levels = cfg.get_size_or("levels", 2);

    fs::create_directories(out_dir);
    const DenseMatrix a =
        sample_measurement_matrix(m, n, derive_stream(seed, 1).next_u64());
    const DenseMatrix d = build_dictionary({parse_dict(dict), n, levels});
    const DenseMatrix f = identity(n);

    const double ad_norm_sq = spectral_norm_sq(matmul(a, d));
    if (ad_norm_sq >= 1.0)
        std::cerr << "warning: ||A D||^2 = " << fmt(ad_norm_sq)
                  << " >= 1; unit step size is not guaranteed to converge\n";

    write_ssr1(out_dir / "A.ssr1", a);
    write_ssr1(out_dir / "D.ssr1", d);
    write_ssr1(out_dir / "F.ssr1", f);

    std::ostringstream manifest;
    manifest << "ssr-dataset 1\n";
    for (const auto& [k, v] : cfg.values) manifest << k << " = " << v << "\n";

    if (cfg.has("image")) {
        // Image mode: one test sequence from the PGM columns.
        SequenceSample s = load_image_columns(cfg.get_str("image"), n);
        const std::uint64_t mseed = derive_stream(seed, 4).next_u64();
        s.x_seq = measure(s.y_seq, a, sigma2, mseed);
        write_sample(out_dir / "test_0000.sample", s);
        manifest << "sample test_0000.sample measure_seed " << mseed << "\n";
    } else {
        const std::size_t t_len = cfg.get_size("t");
        SequentialModelSpec spec{a, d, f, sigma2, nu1, nu2, t_len, DenseVector(n, 0.0)};
        const std::string splits[3] = {"train", "val", "test"};
        const std::size_t counts[3] = {cfg.get_size_or("train_count", 0),
                                       cfg.get_size_or("val_count", 0),
                                       cfg.get_size_or("test_count", 0)};
        for (int s = 0; s < 3; ++s) {
            for (std::size_t i = 0; i < counts[s]; ++i) {
                const std::uint64_t sseed =
                    derive_stream(seed, 1000 * (static_cast<std::uint64_t>(s) + 1) + i)
                        .next_u64();
                const std::string name = splits[s] + "_" + zero_pad(i, 4) + ".sample";
                write_sample(out_dir / name, sample_sequence(spec, sseed));
                manifest << "sample " << name << " seed " << sseed << "\n";
            }
        }
    }
    write_file_atomic(out_dir / "manifest.txt", manifest.str());
    std::cout << "dataset written to " << out_dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// recover
// ---------------------------------------------------------------------------

int cmd_recover(const RunConfig& cfg) {
    cfg.require_known({"data_dir", "split", "algorithm", "k", "alpha", "lambda1", "lambda2",
                       "rel_tol", "max_iter", "out_csv", "peak", "oracle_h0"});
    const LoadedDataset d = load_dataset(cfg.get_str("data_dir"));
    const std::string split = cfg.get_str_or("split", "test");
    const std::vector<SequenceSample>& samples =
        split == "train" ? d.data.train : (split == "val" ? d.data.val : d.data.test);
    const std::string algorithm = cfg.get_str_or("algorithm", "sista");
    const std::size_t k = cfg.get_size_or("k", 3);
    const double rel_tol = cfg.get_double_or("rel_tol", 1e-4);
    const std::size_t max_iter = cfg.get_size_or("max_iter", 20000);
    const double peak = cfg.get_double_or("peak", 1.0);
    const bool oracle_h0 = cfg.get_bool_or("oracle_h0", false);
    SistaParams base = base_params_from(d, cfg);

    std::ostringstream csv;
    csv << "sample,mse,psnr,iters_max,iters_mean\n";
    double mse_sum = 0.0;
    std::size_t iters_max = 0;
    double iters_mean_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SequenceSample& s = samples[i];
        SistaParams p = base;
        if (oracle_h0) p.h0 = matvec_t(p.D, s.y_seq[0]);
        std::vector<DenseVector> y_hat;
        std::vector<std::size_t> iters;
        if (algorithm == "sista") {
            RecoveryResult r = sista(s.x_seq, p, k);
            y_hat = std::move(r.y_seq);
            iters = std::move(r.iters_per_step);
        } else if (algorithm == "sista_converged") {
            RecoveryResult r = sista_converged(s.x_seq, p, rel_tol, max_iter);
            y_hat = std::move(r.y_seq);
            iters = std::move(r.iters_per_step);
        } else if (algorithm == "ista") {
            // Independent per-step lasso, no coupling and no warm start.
            for (const DenseVector& x : s.x_seq) {
                const LassoProblem lp{p.A, p.D, x, p.lambda1};
                y_hat.push_back(matvec(p.D, ista(lp, DenseVector(p.D.cols, 0.0), p.alpha, k,
                                                 false).h));
                iters.push_back(k);
            }
        } else {
            throw ConfigError("unknown algorithm '" + algorithm + "'");
        }
        const double sample_mse = mse(y_hat, s.y_seq);
        std::size_t imax = 0;
        double imean = 0.0;
        for (std::size_t it : iters) {
            imax = std::max(imax, it);
            imean += static_cast<double>(it);
        }
        imean /= static_cast<double>(std::max<std::size_t>(1, iters.size()));
        csv << i << "," << fmt(sample_mse) << "," << fmt(psnr(y_hat, s.y_seq, peak)) << ","
            << imax << "," << fmt(imean) << "\n";
        mse_sum += sample_mse;
        iters_max = std::max(iters_max, imax);
        iters_mean_sum += imean;
    }
    if (!samples.empty()) {
        const double agg = mse_sum / static_cast<double>(samples.size());
        const double agg_psnr =
            agg == 0.0 ? std::numeric_limits<double>::infinity()
                       : 10.0 * std::log10(peak * peak / agg);
        csv << "aggregate," << fmt(agg) << "," << fmt(agg_psnr) << "," << iters_max << ","
            << fmt(iters_mean_sum / static_cast<double>(samples.size())) << "\n";
        std::cout << "recover: " << samples.size() << " sequences, aggregate mse " << fmt(agg)
                  << "\n";
    } else {
        std::cout << "recover: empty split '" << split << "'\n";
    }
    write_file_atomic(cfg.get_str("out_csv"), csv.str());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainMode parse_mode(const std::string& s) {
    if (s == "generic") return TrainMode::generic;
    if (s == "untied_sista") return TrainMode::untied_sista;
    if (s == "tied_sista") return TrainMode::tied_sista;
    throw ConfigError("unknown mode '" + s + "'");
}

std::set<std::string> parse_freeze(const std::string& s) {
    std::set<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.insert(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    return out;
}

int cmd_train(const RunConfig& cfg) {
    cfg.require_known({"data_dir", "mode", "init", "k_layers", "lr", "batch_size", "epochs",
                       "seed", "optimizer", "rmsprop_momentum", "rmsprop_avg",
                       "clamp_lambda2_nonneg", "log_alpha", "freeze", "alpha", "lambda1",
                       "lambda2", "report_csv", "checkpoint_out", "best_checkpoint_out"});
    const LoadedDataset d = load_dataset(cfg.get_str("data_dir"));

    TrainConfig tc;
    tc.mode = parse_mode(cfg.get_str_or("mode", "tied_sista"));
    tc.init = cfg.get_str_or("init", "sista") == "random" ? InitScheme::random
                                                          : InitScheme::sista;
    tc.k_layers = cfg.get_size_or("k_layers", 3);
    tc.lr = cfg.get_double_or("lr", 1e-4);
    tc.batch_size = cfg.get_size_or("batch_size", 50);
    tc.epochs = cfg.get_size_or("epochs", 1);
    tc.seed = cfg.get_u64_or("seed", 0);
    tc.optimizer = cfg.get_str_or("optimizer", "rmsprop") == "sgd" ? OptimizerKind::sgd
                                                                   : OptimizerKind::rmsprop;
    tc.rmsprop_momentum = cfg.get_double_or("rmsprop_momentum", 0.9);
    tc.rmsprop_avg = cfg.get_double_or("rmsprop_avg", 0.1);
    tc.clamp_lambda2_nonneg = cfg.get_bool_or("clamp_lambda2_nonneg", false);
    tc.log_alpha = cfg.get_bool_or("log_alpha", false);
    tc.freeze = parse_freeze(cfg.get_str_or("freeze", ""));

    const SistaParams base = base_params_from(d, cfg);

    // Interpretable report, before.
    if (tc.mode == TrainMode::tied_sista && tc.init == InitScheme::sista)
        std::cout << "initial scalars: alpha " << fmt(base.alpha) << " lambda1 "
                  << fmt(base.lambda1) << " lambda2 " << fmt(base.lambda2) << "\n";

    const TrainOutcome out = train(d.data, tc, base);
    std::cout << "epoch 0: val_mse " << fmt(out.report.epoch0_val_mse) << "\n";
    for (std::size_t e = 0; e < out.report.epochs_completed; ++e)
        std::cout << "epoch " << (e + 1) << ": train_loss " << fmt(out.report.train_loss[e])
                  << " val_mse " << fmt(out.report.val_mse[e]) << " ("
                  << fmt(out.report.seconds[e]) << " s)\n";
    std::cout << "best epoch " << out.report.best_epoch << " val_mse "
              << fmt(out.report.best_val_mse) << "\n";

    if (tc.mode == TrainMode::tied_sista) {
        const SistaParams& p = std::get<TiedSistaNet>(out.final_params).params;
        std::cout << "trained scalars: alpha " << fmt(p.alpha) << " lambda1 "
                  << fmt(p.lambda1) << " lambda2 " << fmt(p.lambda2) << "\n";
        const auto& p0 =
            std::get<TiedSistaNet>(init_params(tc, d.D.rows, d.A.rows, base)).params;
        std::cout << "max-abs change: D " << fmt(max_abs_diff(p.D, p0.D)) << " F "
                  << fmt(max_abs_diff(p.F, p0.F)) << "\n";
    }

    // Loss CSV; deterministic, so wall times stay on the terminal.
    write_file_atomic(cfg.get_str("report_csv"), train_report_csv(out.report));

    if (cfg.has("checkpoint_out"))
        write_checkpoint(cfg.get_str("checkpoint_out"), to_checkpoint(out.final_params));
    if (cfg.has("best_checkpoint_out"))
        write_checkpoint(cfg.get_str("best_checkpoint_out"), to_checkpoint(out.best_params));

    if (out.report.diverged) {
        std::cerr << "training diverged after " << out.report.epochs_completed << " epochs\n";
        return 4;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / equiv
// ---------------------------------------------------------------------------

int cmd_gradcheck(const RunConfig& cfg) {
    cfg.require_known({"n", "m", "t", "k", "instances", "seed", "step", "tol", "kink_margin",
                       "inject_sign_flip"});
    GradCheckConfig gc;
    gc.n = cfg.get_size_or("n", 6);
    gc.m = cfg.get_size_or("m", 3);
    gc.t_len = cfg.get_size_or("t", 3);
    gc.k = cfg.get_size_or("k", 2);
    gc.instances = cfg.get_size_or("instances", 20);
    gc.seed = cfg.get_u64_or("seed", 0);
    gc.step = cfg.get_double_or("step", 1e-6);
    gc.tol = cfg.get_double_or("tol", 1e-6);
    gc.kink_margin = cfg.get_double_or("kink_margin", 1e-3);
    gc.inject_sign_flip = cfg.get_bool_or("inject_sign_flip", false);

    const GradCheckReport rep = run_gradcheck(gc);
    for (const auto& m : rep.modes)
        std::cout << m.mode << ": max rel err " << fmt(m.max_rel_err) << " (worst block "
                  << m.worst_block << ", " << m.instances_checked << " instances, "
                  << m.instances_skipped << " skipped)\n";
    std::cout << (rep.pass ? "PASS" : "FAIL") << " gradcheck at tol " << fmt(gc.tol) << "\n";
    return rep.pass ? 0 : 1;
}

int cmd_equiv(const RunConfig& cfg) {
    cfg.require_known({"instances", "n", "m", "t", "k", "seed", "tol", "alpha_min",
                       "alpha_max", "lambda1_min", "lambda1_max", "lambda2_min",
                       "lambda2_max"});
    const std::size_t instances = cfg.get_size_or("instances", 100);
    const std::size_t n = cfg.get_size_or("n", 16);
    const std::size_t m = cfg.get_size_or("m", 8);
    const std::size_t t_len = cfg.get_size_or("t", 5);
    const std::size_t k = cfg.get_size_or("k", 3);
    const std::uint64_t seed = cfg.get_u64_or("seed", 0);
    const double tol = cfg.get_double_or("tol", 1e-9);
    InstanceRanges ranges;
    ranges.alpha_min = cfg.get_double_or("alpha_min", 1.0);
    ranges.alpha_max = cfg.get_double_or("alpha_max", 4.0);
    ranges.lambda1_min = cfg.get_double_or("lambda1_min", 0.01);
    ranges.lambda1_max = cfg.get_double_or("lambda1_max", 1.0);
    ranges.lambda2_min = cfg.get_double_or("lambda2_min", 0.01);
    ranges.lambda2_max = cfg.get_double_or("lambda2_max", 1.0);

    double global_max = 0.0;
    bool all_pass = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::uint64_t s = SplitMix64::mix(seed) + i;
        const SistaParams p = random_sista_params(n, m, s, ranges);
        const std::vector<DenseVector> x = random_observations(t_len, m, s);
        const EquivalenceReport rep = equivalence_check(p, k, x, tol);
        global_max = std::max(global_max, rep.max_abs);
        all_pass = all_pass && rep.pass;
    }
    std::cout << "equiv: " << instances << " instances, max deviation " << fmt(global_max)
              << ", tol " << fmt(tol) << "\n";
    std::cout << (all_pass ? "PASS" : "FAIL") << "\n";
    return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const RunConfig& cfg) {
    cfg.require_known({"checkpoint", "data_dir", "split", "out_csv", "peak"});
    const LoadedDataset d = load_dataset(cfg.get_str("data_dir"));
    const std::string split = cfg.get_str_or("split", "test");
    const std::vector<SequenceSample>& samples =
        split == "train" ? d.data.train : (split == "val" ? d.data.val : d.data.test);
    const double peak = cfg.get_double_or("peak", 1.0);
    const TrainableParams params = from_checkpoint(read_checkpoint(cfg.get_str("checkpoint")));
    const StackedRnnParams net = materialize(params);

    std::ostringstream csv;
    csv << "sample,mse,psnr\n";
    double mse_sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::vector<DenseVector> y_hat = forward(net, samples[i].x_seq).y_hat;
        const double m = mse(y_hat, samples[i].y_seq);
        csv << i << "," << fmt(m) << "," << fmt(psnr(y_hat, samples[i].y_seq, peak)) << "\n";
        mse_sum += m;
    }
    if (!samples.empty()) {
        const double agg = mse_sum / static_cast<double>(samples.size());
        const double agg_psnr =
            agg == 0.0 ? std::numeric_limits<double>::infinity()
                       : 10.0 * std::log10(peak * peak / agg);
        csv << "aggregate," << fmt(agg) << "," << fmt(agg_psnr) << "\n";
        std::cout << "eval: aggregate mse " << fmt(agg) << "\n";
    }
    write_file_atomic(cfg.get_str("out_csv"), csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sequential sparse recovery toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    const char* names[] = {"datagen", "recover", "train", "gradcheck", "equiv", "eval"};
    const char* descs[] = {"generate dataset files from the sequential model or a PGM image",
                           "run the iterative solvers over a dataset and report metrics",
                           "train an unfolded network and write report + checkpoints",
                           "finite-difference validation of analytic gradients",
                           "solver vs mapped-network equivalence check",
                           "evaluate a checkpoint on a dataset split"};
    for (int i = 0; i < 6; ++i)
        app.add_subcommand(names[i], descs[i])
            ->add_option("config", config_path, "path to key = value config file")
            ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = parse_config(config_path);
        if (app.got_subcommand("datagen")) return cmd_datagen(cfg);
        if (app.got_subcommand("recover")) return cmd_recover(cfg);
        if (app.got_subcommand("train")) return cmd_train(cfg);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(cfg);
        if (app.got_subcommand("equiv")) return cmd_equiv(cfg);
        if (app.got_subcommand("eval")) return cmd_eval(cfg);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const PgmError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const SpectralNormError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
}
