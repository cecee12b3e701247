#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sstode/errors.hpp"
#include "sstode/experiment.hpp"
#include "sstode/gradcheck_suite.hpp"
#include "sstode/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sstode;

namespace {

/// Flags shared by every subcommand.
struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
};

ExperimentConfig load_config(const Globals& g) {
    ExperimentConfig cfg = g.config.empty() ? ExperimentConfig::desk() : ExperimentConfig::from_json(io::read_json(g.config));
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

fs::path ensure_out(const Globals& g) {
    fs::create_directories(g.out);
    return g.out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

/// Model and parameters from a checkpoint directory, or a fresh training run when none is given.
struct Trained {
    ExperimentConfig cfg;
    Dataset ds;
    ad::ParamSet params;
};

Trained trained_or_loaded(const Globals& g, const std::string& checkpoint, VelocityCache& cache) {
    Trained t;
    if (!checkpoint.empty()) {
        auto [params, cfg] = load_checkpoint(checkpoint);
        if (g.seed) cfg.seed = *g.seed;
        t.cfg = cfg;
        t.params = std::move(params);
        t.ds = load_experiment_dataset(t.cfg);
        return t;
    }
    t.cfg = load_config(g);
    t.ds = load_experiment_dataset(t.cfg);
    TrainOptions opts;
    opts.cache = &cache;
    t.params = train(t.cfg, t.ds, opts).params;
    return t;
}

json trajectory_json(const Trajectory& traj) {
    return {{"times", traj.times}, {"frames", traj.frames}};
}

int cmd_gen(const Globals& g, const std::string& kind, const std::string& dtype) {
    ExperimentConfig cfg = load_config(g);
    if (!kind.empty()) cfg.synthetic.kind = parse_synthetic_kind(kind);
    const Dataset ds = gen_synthetic(cfg.synthetic, cfg.seed);
    const fs::path manifest = ensure_out(g) / "dataset.json";
    save_dataset(ds, manifest, dtype == "f32" ? DType::f32 : DType::f64);
    print_json({{"manifest", manifest.string()},
                {"kind", to_string(cfg.synthetic.kind)},
                {"snapshots", ds.length()},
                {"height", ds.grid->height()},
                {"width", ds.grid->width()}});
    return 0;
}

int cmd_estimate(const Globals& g, const std::string& split_name, std::size_t index) {
    const ExperimentConfig cfg = load_config(g);
    const Dataset ds = load_experiment_dataset(cfg);
    const auto windows = make_windows(ds, cfg.p, 1, parse_split(split_name));
    require(index < windows.size(), ErrorCode::OutOfBounds,
            "window " + std::to_string(index) + " of " + std::to_string(windows.size()));
    const VelocityEstimate est = estimate_initial_velocity(windows[index].history(ds.grid), cfg.velocity);
    const json out{{"t0", windows[index].t0()},
                   {"kappa", est.kappa()},
                   {"final_loss", est.final_loss},
                   {"epochs", est.epochs_run},
                   {"u", est.velocity.u},
                   {"v", est.velocity.v}};
    const fs::path path = ensure_out(g) / "v0.json";
    io::atomic_write_text(path, out.dump());
    print_json({{"output", path.string()},
                {"t0", out["t0"]},
                {"kappa", est.kappa()},
                {"final_loss", est.final_loss}});
    return 0;
}

int cmd_train(const Globals& g) {
    const ExperimentConfig cfg = load_config(g);
    const Dataset ds = load_experiment_dataset(cfg);
    VelocityCache cache;
    TrainOptions opts;
    opts.out_dir = ensure_out(g);
    opts.cache = &cache;
    opts.on_epoch = [](const TrainLogEntry& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << " lr " << e.lr << "\n";
    };
    const TrainResult res = train(cfg, ds, opts);
    print_json({{"checkpoint", (opts.out_dir / "checkpoint").string()},
                {"epochs", res.log.size()},
                {"final_loss", res.log.empty() ? json(nullptr) : json(res.log.back().loss)},
                {"kappa_init", res.kappa_init}});
    return 0;
}

/// Shared by `forecast` and `export`: forecast one test window with a checkpoint.
ForecastResult forecast_window(const Trained& t, std::size_t index, std::size_t q, Window* window_out) {
    require(q >= 1, ErrorCode::InvalidArgument, "q must be >= 1");
    const auto windows = make_windows(t.ds, t.cfg.p, q, Split::test);
    require(index < windows.size(), ErrorCode::OutOfBounds,
            "window " + std::to_string(index) + " of " + std::to_string(windows.size()));
    const SstOdeModel model(t.cfg.model, t.ds.grid, t.ds.orography);
    model.check_compatible(t.params);
    ad::ParamSet params = t.params;
    *window_out = windows[index];
    return forecast(model, params, windows[index], windows[index].target_times, t.cfg.velocity);
}

Trajectory truth_of(const Window& w, const GridPtr& grid) {
    Trajectory truth;
    truth.grid = grid;
    for (std::size_t k = 0; k < w.targets.size(); ++k) truth.push(w.target_times[k], w.targets[k]);
    return truth;
}

int cmd_forecast(const Globals& g, const std::string& checkpoint, std::size_t index, std::size_t q) {
    VelocityCache cache;
    const Trained t = trained_or_loaded(g, checkpoint, cache);
    Window w;
    const ForecastResult res = forecast_window(t, index, q, &w);
    const Trajectory truth = truth_of(w, t.ds.grid);
    const MetricReport rep = evaluate(res.forecast, truth, t.ds.normalization.at(kSstName));
    const fs::path path = ensure_out(g) / "forecast.json";
    io::atomic_write_text(path, json{{"forecast", trajectory_json(res.forecast)}, {"metrics", rep.to_json()}}.dump());
    print_json({{"output", path.string()}, {"metrics", rep.to_json()}});
    return 0;
}

int cmd_export(const Globals& g, const std::string& checkpoint, std::size_t index, std::size_t q) {
    VelocityCache cache;
    const Trained t = trained_or_loaded(g, checkpoint, cache);
    Window w;
    const ForecastResult res = forecast_window(t, index, q, &w);
    const Trajectory truth = truth_of(w, t.ds.grid);
    const fs::path manifest = ensure_out(g) / "decomposition.json";
    export_decomposition(res, &truth, manifest);
    print_json({{"manifest", manifest.string()}, {"groups", decomposition_groups()}, {"steps", res.forecast.size()}});
    return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& split_name, std::size_t q,
             std::size_t subsample_factor) {
    VelocityCache cache;
    Trained t = trained_or_loaded(g, checkpoint, cache);
    if (subsample_factor > 1) t.ds = subsample(t.ds, subsample_factor);
    const SstOdeModel model(t.cfg.model, t.ds.grid, t.ds.orography);
    model.check_compatible(t.params);
    const EvalResult res = evaluate_split(model, t.params, t.ds, parse_split(split_name), t.cfg.p,
                                          q ? q : t.cfg.q, t.cfg.velocity, t.cfg.max_eval_windows, &cache);
    json out{{"split", split_name}, {"windows", res.windows}, {"all", res.all.to_json()}};
    if (res.has_coast) {
        out["coastal"] = res.coastal.to_json();
        out["open"] = res.open.to_json();
    }
    io::atomic_write_text(ensure_out(g) / "eval.json", out.dump(2));
    print_json(out);
    return 0;
}

int cmd_ablate(const Globals& g, const std::string& study) {
    const ExperimentConfig base = load_config(g);
    const Dataset ds = load_experiment_dataset(base);
    std::vector<std::string> labels;
    const auto configs = ablation_variants(base, study, &labels);
    VelocityCache cache;
    const auto rows = run_ablation(configs, labels, ds, &cache);
    io::atomic_write_text(ensure_out(g) / ("ablation_" + study + ".json"), ablation_json(rows).dump(2));
    std::cout << ablation_text(rows);
    return 0;
}

int cmd_robustness(const Globals& g, const std::string& checkpoint, const std::vector<std::size_t>& budgets) {
    VelocityCache cache;
    Trained t = trained_or_loaded(g, checkpoint, cache);
    const SstOdeModel model(t.cfg.model, t.ds.grid, t.ds.orography);
    model.check_compatible(t.params);
    const RobustnessResult res = robustness_sweep(model, t.params, t.ds, t.cfg, budgets);
    json rows = json::array();
    for (std::size_t i = 0; i < res.epochs.size(); ++i)
        rows.push_back({{"epochs", res.epochs[i]}, {"metrics", res.reports[i].to_json()}});
    const json out{{"runs", rows},
                   {"mse_mean", res.mse_mean},
                   {"mse_std", res.mse_std},
                   {"relative_std", res.mse_mean > 0 ? res.mse_std / res.mse_mean : 0.0}};
    io::atomic_write_text(ensure_out(g) / "robustness.json", out.dump(2));
    print_json(out);
    return 0;
}

int cmd_gradcheck(const Globals& g) {
    SuiteOptions opts;
    if (g.seed) opts.grad.seed = *g.seed;
    const auto checks = run_gradcheck_suite(opts);
    for (const auto& c : checks) {
        std::size_t checked = 0;
        for (const auto& e : c.report.entries) checked += e.checked;
        std::printf("%-14s %s  max_rel_error=%.3e  coords=%zu\n", c.name.c_str(), c.report.passed ? "PASS" : "FAIL",
                    c.report.max_rel_error, checked);
    }
    return all_passed(checks) ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural advection-diffusion SST forecaster"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed overriding the config");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    std::string kind, dtype = "f64", split = "test", checkpoint, study;
    std::size_t index = 0, q = 0, factor = 1;
    std::vector<std::size_t> budgets{50, 100, 200, 300, 400};

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    gen->add_option("--kind", kind, "diffusion | advection | advdiff | advdiff_forced");
    gen->add_option("--dtype", dtype, "Blob precision")->check(CLI::IsMember({"f32", "f64"}));

    auto* est = app.add_subcommand("estimate-v0", "Estimate the initial velocity of one window");
    est->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
    est->add_option("--window", index, "Window index within the split");

    auto* tr = app.add_subcommand("train", "Train and write checkpoint + log");

    auto* fc = app.add_subcommand("forecast", "Forecast one test window");
    auto* ex = app.add_subcommand("export", "Dump the forecast decomposition of one test window");
    for (auto* sub : {fc, ex}) {
        sub->add_option("--checkpoint", checkpoint, "Checkpoint directory (trains from the config if omitted)");
        sub->add_option("--window", index, "Test window index");
        sub->add_option("--q", q, "Forecast steps")->required();
    }

    auto* ev = app.add_subcommand("eval", "Evaluate a split");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint directory (trains from the config if omitted)");
    ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
    ev->add_option("--q", q, "Forecast steps (default: config q)");
    ev->add_option("--subsample", factor, "Evaluate at a coarser output cadence (every n-th snapshot)")
        ->check(CLI::PositiveNumber);

    auto* ab = app.add_subcommand("ablate", "Ablation table");
    ab->add_option("--study", study)->required()->check(CLI::IsMember({"diffusion", "source"}));

    auto* rb = app.add_subcommand("robustness", "Velocity-estimation epoch sweep");
    rb->add_option("--checkpoint", checkpoint, "Checkpoint directory (trains from the config if omitted)");
    rb->add_option("--epochs", budgets, "Epoch budgets")->delimiter(',');

    auto* gc = app.add_subcommand("gradcheck", "Gradient verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*gen) return cmd_gen(g, kind, dtype);
        if (*est) return cmd_estimate(g, split, index);
        if (*tr) return cmd_train(g);
        if (*fc) return cmd_forecast(g, checkpoint, index, q);
        if (*ex) return cmd_export(g, checkpoint, index, q);
        if (*ev) return cmd_eval(g, checkpoint, split, q, factor);
        if (*ab) return cmd_ablate(g, study);
        if (*rb) return cmd_robustness(g, checkpoint, budgets);
        if (*gc) return cmd_gradcheck(g);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_numerical(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 1;
}
