/// Acceptance runner: prints one PASS/FAIL line per criterion.
///
/// Usage: sstode_acceptance [--known-failure N]... [--only N]...
/// Exit status is 0 when every criterion passes or fails only among the
/// listed known failures; those still print FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "sstode/data.hpp"
#include "sstode/dynamics.hpp"
#include "sstode/errors.hpp"
#include "sstode/experiment.hpp"
#include "sstode/gradcheck_suite.hpp"
#include "sstode/metrics.hpp"
#include "sstode/optim.hpp"
#include "sstode/velocity_init.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

OdeState state_of(const ScalarField& y) {
    OdeState s;
    s.sst = y;
    s.velocity = VectorField(y.grid);
    return s;
}

/// Pure diffusion of fourier_mode(4, 2) on a 64x64 periodic grid with explicit Euler.
double mode_amplitude(double step, double kappa, double horizon, const GridPtr& g, const ScalarField& f) {
    IntegrateConfig cfg;
    cfg.step = step;
    cfg.output_every = horizon;
    Dynamics dyn;
    dyn.kappa = kappa;
    const auto out = integrate(state_of(f), horizon, cfg, dyn).outputs.back().sst;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g->cells(); ++i) {
        num += out.values[i] * f.values[i];
        den += f.values[i] * f.values[i];
    }
    return num / den;
}

Outcome laplacian_eigen_decay() {
    const auto g = periodic_grid(64, 64);
    const auto f = fourier_mode(g, 4, 2);
    const double kappa = 0.2, lambda = mode_eigenvalue(*g, 4, 2);
    // Closed form of explicit Euler at the default 1 h step ...
    const double a1 = mode_amplitude(1.0, kappa, 24.0, g, f);
    const double closed = std::pow(1.0 - kappa * lambda * 1.0, 24);
    // ... and the fine-step limit against the continuous-time decay.
    const double af = mode_amplitude(0.01, kappa, 24.0, g, f);
    const double exact = std::exp(-kappa * lambda * 24.0);
    const double e1 = std::abs(a1 - closed) / closed, ef = std::abs(af - exact) / exact;
    return {e1 < 1e-3 && ef < 1e-3,
            fmt("step 1h rel err %.2e vs (1-k*lambda*dt)^n; step 0.01h rel err %.2e vs exp(-k*lambda*T) (tol 1e-3)", e1,
                ef)};
}

Outcome euler_order() {
    const auto g = periodic_grid(64, 64);
    const auto f = fourier_mode(g, 4, 2);
    const double kappa = 0.2, exact = std::exp(-kappa * mode_eigenvalue(*g, 4, 2) * 24.0);
    double err[3];
    const double steps[3] = {1.0, 0.5, 0.25};
    for (int k = 0; k < 3; ++k) err[k] = std::abs(mode_amplitude(steps[k], kappa, 24.0, g, f) - exact);
    const double r1 = err[0] / err[1], r2 = err[1] / err[2];
    return {r1 >= 1.7 && r1 <= 2.3 && r2 >= 1.7 && r2 <= 2.3,
            fmt("error ratios %.3f (1h->0.5h), %.3f (0.5h->0.25h), range [1.7, 2.3]", r1, r2)};
}

Outcome conservation() {
    const auto g = periodic_grid(32, 32);
    std::mt19937_64 rng(12);
    auto y = random_field(g, rng);
    for (auto& v : y.values) v += 20.0;
    IntegrateConfig cfg;
    cfg.output_every = 24.0;
    Dynamics dyn;
    dyn.kappa = 0.2;
    const auto out = integrate(state_of(y), 24.0, cfg, dyn).outputs.back().sst;
    double s0 = 0.0, s1 = 0.0;
    for (double v : y.values) s0 += v;
    for (double v : out.values) s1 += v;
    const double drift = std::abs(s1 - s0) / std::abs(s0);
    return {drift < 1e-9, fmt("relative drift %.2e after 24 steps (tol 1e-9)", drift)};
}

Trajectory first_snapshots(const Dataset& ds, std::size_t n) {
    Trajectory h;
    h.grid = ds.grid;
    for (std::size_t k = 0; k < n; ++k) h.push(ds.sst().times[k], ds.sst().frames[k]);
    return h;
}

VelocityInitConfig recovery_settings() {
    VelocityInitConfig cfg;  // lr 2, 200 epochs, alpha 1e-7
    cfg.rbf = true;
    return cfg;
}

Outcome velocity_recovery() {
    double worst = 0.0, slowest = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticParams p;
        p.kind = SyntheticKind::advection;
        p.height = 32;
        p.width = 64;
        p.length = 3;
        p.cadence_hours = 6.0;
        p.u = 0.5;
        p.v = -0.3;
        p.max_wavenumber = 3;
        const Dataset ds = gen_synthetic(p, seed);
        const auto t0 = std::chrono::steady_clock::now();
        const auto est = estimate_initial_velocity(first_snapshots(ds, 3), recovery_settings());
        slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        // Interior: ocean cells at least two rows away from the reflective walls.
        const auto& g = *ds.grid;
        double num = 0.0, den = 0.0;
        for (std::size_t r = 2; r + 2 < g.height(); ++r)
            for (std::size_t c = 0; c < g.width(); ++c) {
                const std::size_t i = g.index(r, c);
                if (!g.ocean(i)) continue;
                const double du = est.velocity.u[i] - p.u, dv = est.velocity.v[i] - p.v;
                num += du * du + dv * dv;
                den += p.u * p.u + p.v * p.v;
            }
        const double err = std::sqrt(num / den);
        worst = std::max(worst, err);
        per_seed += fmt(" %.1f%%", 100.0 * err);
    }
    return {worst <= 0.10 && slowest < 60.0,
            fmt("relative L2 error over seeds 1-5:%s (tol 10%%); slowest estimate %.1fs (limit 60s)", per_seed.c_str(),
                slowest)};
}

Outcome diffusivity_recovery() {
    double worst = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 4; seed <= 8; ++seed) {
        SyntheticParams p;
        p.kind = SyntheticKind::diffusion;
        p.kappa = 0.2;
        p.height = 32;
        p.width = 64;
        p.length = 3;
        p.max_wavenumber = 3;
        const Dataset ds = gen_synthetic(p, seed);
        const double k = estimate_initial_velocity(first_snapshots(ds, 3), recovery_settings()).kappa();
        worst = std::max(worst, std::abs(k - 0.2) / 0.2);
        per_seed += fmt(" %.4f", k);
    }
    return {worst <= 0.15, fmt("recovered kappa over seeds 4-8:%s (kappa* 0.2, tol 15%%)", per_seed.c_str())};
}

Outcome gradient_verification() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto checks = run_gradcheck_suite();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    std::string failed;
    for (const auto& c : checks) {
        worst = std::max(worst, c.report.max_rel_error);
        if (!c.report.passed) failed += " " + c.name;
    }
    return {all_passed(checks) && secs < 300.0,
            fmt("%zu checks, max rel error %.2e (rtol 1e-4, h 1e-4, 8x8, 3 Euler steps), %.1fs%s%s", checks.size(),
                worst, secs, failed.empty() ? "" : "; failed:", failed.c_str())};
}

Outcome diffusion_ablation() {
    ExperimentConfig base = ExperimentConfig::desk();
    base.synthetic.coastal_anomaly = 2.0;
    base.synthetic.coastal_width = 1.5;
    const Dataset ds = load_experiment_dataset(base);
    std::vector<std::string> labels;
    const auto variants = ablation_variants(base, "diffusion", &labels);
    VelocityCache cache;
    const auto rows = run_ablation({variants[0], variants[3]}, {labels[0], labels[3]}, ds, &cache);
    const auto& none = rows[0];
    const auto& scalar = rows[1];
    const double rn = none.extra.at("coastal_open_ratio").get<double>();
    const double rs = scalar.extra.at("coastal_open_ratio").get<double>();
    return {scalar.report.mse < none.report.mse && rn > rs,
            fmt("test MSE scalar-kappa %.5f vs no-diffusion %.5f; coastal/open MSE ratio no-diffusion %.3f vs "
                "scalar-kappa %.3f",
                scalar.report.mse, none.report.mse, rn, rs)};
}

Outcome source_ablation() {
    ExperimentConfig base = ExperimentConfig::desk();
    base.synthetic.kind = SyntheticKind::advdiff_forced;
    base.synthetic.source_amplitude = 0.25;
    base.synthetic.kappa = 0.05;
    base.synthetic.u = 0.0;
    base.synthetic.v = 0.0;
    base.model.velocity_net = false;
    base.batch_size = 2;
    base.optim.lr = 1e-2;
    const Dataset ds = load_experiment_dataset(base);
    std::vector<std::string> labels;
    const auto variants = ablation_variants(base, "source", &labels);
    VelocityCache cache;
    const auto rows =
        run_ablation({variants[0], variants[1], variants[5]}, {labels[0], labels[1], labels[5]}, ds, &cache);
    const double none = rows[0].report.mse, sw = rows[1].report.mse, full = rows[2].report.mse;
    const double gain = 1.0 - full / none;
    return {gain >= 0.30 && sw < none,
            fmt("test MSE disabled %.5f, SW-only %.5f, full %.5f; full improves by %.1f%% (need >= 30%%)", none, sw,
                full, 100.0 * gain)};
}

/// Shared trained checkpoint for the long-horizon criteria.
struct LongRun {
    ExperimentConfig cfg;
    Dataset ds;
    std::unique_ptr<SstOdeModel> model;
    ad::ParamSet params;
    VelocityCache cache;
};

LongRun& long_run() {
    static LongRun run = [] {
        LongRun r;
        r.cfg = ExperimentConfig::desk();
        r.cfg.synthetic.length = 90;
        r.cfg.synthetic.train_fraction = 0.5;
        r.cfg.synthetic.val_fraction = 0.1;
        r.cfg.synthetic.kappa = 0.05;
        r.ds = load_experiment_dataset(r.cfg);
        TrainOptions opts;
        opts.cache = &r.cache;
        r.params = train(r.cfg, r.ds, opts).params;
        r.model = std::make_unique<SstOdeModel>(r.cfg.model, r.ds.grid, r.ds.orography);
        return r;
    }();
    return run;
}

Outcome robustness() {
    auto& r = long_run();
    const auto res = robustness_sweep(*r.model, r.params, r.ds, r.cfg, {50, 100, 200, 300, 400});
    std::string per;
    for (std::size_t k = 0; k < res.epochs.size(); ++k) per += fmt(" %zu:%.5f", res.epochs[k], res.reports[k].mse);
    const double rel = res.mse_std / res.mse_mean;
    return {rel <= 0.05, fmt("test MSE by velocity epochs%s; std/mean %.3f (tol 0.05)", per.c_str(), rel)};
}

Outcome cadence() {
    auto& r = long_run();
    // 7-day horizon: 28 outputs at 6 h, 14 outputs at 12 h.
    const auto e6 = evaluate_split(*r.model, r.params, r.ds, Split::test, r.cfg.p, 28, r.cfg.velocity, 4, &r.cache);
    const Dataset coarse = subsample(r.ds, 2);
    const auto e12 = evaluate_split(*r.model, r.params, coarse, Split::test, r.cfg.p, 14, r.cfg.velocity, 4, &r.cache);
    const bool finite = std::isfinite(e6.all.mse) && std::isfinite(e6.all.mae) && std::isfinite(e6.all.acc) &&
                        std::isfinite(e12.all.mse) && std::isfinite(e12.all.mae) && std::isfinite(e12.all.acc);
    const double ratio = e12.all.mse / e6.all.mse;
    return {finite && ratio <= 2.0 && ratio >= 0.5,
            fmt("7-day MSE 6h %.5f (%zu windows), 12h %.5f (%zu windows); ratio %.3f (within 2x)", e6.all.mse,
                e6.windows, e12.all.mse, e12.windows, ratio)};
}

Outcome metric_formulas() {
    const auto g = GridSpec::global(3, 3, {1, 0, 1, 0, 1, 0, 1, 0, 1});
    auto traj = [&](const std::vector<double>& vals) {
        std::vector<double> f(g->cells(), 0.0);
        std::size_t k = 0;
        for (std::size_t i = 0; i < g->cells(); ++i)
            if (g->ocean(i)) f[i] = vals[k++];
        Trajectory t;
        t.grid = g;
        t.push(6.0, f);
        return t;
    };
    const auto truth = traj({1, 2, 3, 4, 5});
    const auto r = evaluate(traj({1.5, 1.5, 3.5, 3, 6}), truth, Normalization{});
    // Errors 0.5, -0.5, 0.5, -1, 1; anomaly products sum to 10.5 over sqrt(13.7 * 10).
    const double e_mse = std::abs(r.mse - 0.55), e_mae = std::abs(r.mae - 0.7),
                 e_acc = std::abs(r.acc - 10.5 / std::sqrt(137.0));
    const auto id = evaluate(truth, truth, Normalization{});
    const bool ok = e_mse <= 1e-12 && e_mae <= 1e-12 && e_acc <= 1e-12 && id.mse == 0.0 && id.mae == 0.0 &&
                    std::abs(id.acc - 1.0) <= 1e-12;
    return {ok, fmt("toy |dMSE| %.1e |dMAE| %.1e |dACC| %.1e (tol 1e-12); identity MSE %g MAE %g ACC %.12f", e_mse,
                    e_mae, e_acc, id.mse, id.mae, id.acc)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    ExperimentConfig c = ExperimentConfig::desk();
    c.synthetic.height = 12;
    c.synthetic.width = 16;
    c.synthetic.length = 30;
    c.synthetic.continents = {Continent{4, 7, 5, 9}};
    c.epochs = 2;
    c.max_train_windows = 4;
    c.velocity.epochs = 50;
    const Dataset ds = load_experiment_dataset(c);
    const auto root = fs::temp_directory_path() / "sstode_acceptance_det";
    fs::remove_all(root);
    TrainOptions o1, o2;
    o1.out_dir = root / "a";
    o2.out_dir = root / "b";
    fs::create_directories(o1.out_dir);
    fs::create_directories(o2.out_dir);
    const auto a = train(c, ds, o1);
    const auto b = train(c, ds, o2);
    bool logs = a.log.size() == b.log.size();
    for (std::size_t k = 0; logs && k < a.log.size(); ++k)
        logs = a.log[k].epoch == b.log[k].epoch && a.log[k].loss == b.log[k].loss && a.log[k].lr == b.log[k].lr;
    const bool runs = a.params.values_equal(b.params) && logs &&
                      slurp(o1.out_dir / "checkpoint.bin") == slurp(o2.out_dir / "checkpoint.bin");

    // Checkpoint round-trip: load, compare, re-save, compare bytes.
    const auto [loaded, cfg_back] = load_checkpoint(o1.out_dir);
    save_checkpoint(root / "c", loaded, cfg_back);
    const bool ckpt = loaded.values_equal(a.params) &&
                      slurp(o1.out_dir / "checkpoint.bin") == slurp(root / "c" / "checkpoint.bin") &&
                      cfg_back.to_json() == c.to_json();

    // Dataset round-trip: every variable, timestamp, mask and statistic.
    SyntheticParams sp = c.synthetic;
    sp.kind = SyntheticKind::advdiff_forced;
    const Dataset raw = gen_synthetic(sp, 5);
    save_dataset(raw, root / "ds.json");
    LoadOptions lo;
    lo.standardize = false;
    const Dataset back = load_dataset(root / "ds.json", lo);
    bool data = back.grid->mask() == raw.grid->mask() && back.variables.size() == raw.variables.size() &&
                back.cadence_hours == raw.cadence_hours && back.orography == raw.orography;
    for (const auto& [name, tr] : raw.variables)
        data = data && back.variables.count(name) && back.variable(name).frames == tr.frames &&
               back.variable(name).times == tr.times;
    fs::remove_all(root);
    return {runs && ckpt && data,
            fmt("training runs bit-identical: %s; checkpoint round-trip: %s; dataset round-trip: %s",
                runs ? "yes" : "no", ckpt ? "yes" : "no", data ? "yes" : "no")};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> known, only;
    for (int k = 1; k + 1 < argc; k += 2) {
        const std::string flag = argv[k];
        if (flag == "--known-failure") known.insert(std::stoi(argv[k + 1]));
        else if (flag == "--only") only.insert(std::stoi(argv[k + 1]));
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Laplacian eigen-decay", laplacian_eigen_decay},
        {"Euler convergence order", euler_order},
        {"Conservation", conservation},
        {"Velocity recovery", velocity_recovery},
        {"Diffusivity recovery", diffusivity_recovery},
        {"Gradient verification", gradient_verification},
        {"Diffusion ablation direction", diffusion_ablation},
        {"Source ablation direction", source_ablation},
        {"Robustness to velocity epochs", robustness},
        {"Output cadence", cadence},
        {"Metric formulas", metric_formulas},
        {"Determinism and round-trips", determinism},
    };
    int unexpected = 0, passed = 0, run = 0;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!only.empty() && !only.count(id)) continue;
        ++run;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %s  %s: %s (%.1fs)%s\n", id, o.pass ? "PASS" : "FAIL", criteria[k].first.c_str(),
                    o.detail.c_str(), secs, !o.pass && known.count(id) ? "  [known failure]" : "");
        std::fflush(stdout);
        if (o.pass) ++passed;
        else if (!known.count(id)) ++unexpected;
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d/%d criteria passed, %d unexpected failure(s), %.1fs total\n", passed, run, unexpected, total);
    return unexpected == 0 ? 0 : 1;
}
