#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sstode/errors.hpp"
#include "sstode/experiment.hpp"
#include "sstode/io.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;
namespace fs = std::filesystem;

namespace {

/// A few seconds of training on a small grid.
ExperimentConfig tiny_config() {
    ExperimentConfig c = ExperimentConfig::desk();
    c.synthetic.kind = SyntheticKind::advdiff_forced;
    c.synthetic.height = 8;
    c.synthetic.width = 12;
    c.synthetic.length = 24;
    c.synthetic.kappa = 0.1;
    c.synthetic.source_amplitude = 0.25;
    c.synthetic.continents = {Continent{3, 5, 4, 7}};
    c.model.fv_hidden = 4;
    c.model.fv_blocks = 1;
    c.model.fv_attention_pool = 2;
    c.model.fs_hidden = 4;
    c.model.fs_blocks = 1;
    c.q = 2;
    c.epochs = 2;
    c.batch_size = 2;
    c.max_train_windows = 4;
    c.max_eval_windows = 2;
    c.velocity.epochs = 20;
    c.seed = 3;
    return c;
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

} // namespace

TEST_CASE("config JSON round-trip and validation") {
    const ExperimentConfig c = tiny_config();
    const auto j = c.to_json();
    const ExperimentConfig back = ExperimentConfig::from_json(j);
    CHECK(back.to_json() == j);

    const auto full = ExperimentConfig::paper();
    CHECK(full.epochs == 50);
    CHECK(full.batch_size == 16);
    CHECK(full.optim.lr == 5e-4);
    CHECK(full.optim.kind == "adamw");
    CHECK(full.optim.cosine);
    CHECK(full.model.solver == Solver::euler);
    CHECK(full.model.step == 1.0);
    CHECK(full.velocity.lr == 2.0);
    CHECK(full.velocity.epochs == 200);
    CHECK(full.velocity.alpha == 1e-7);
    CHECK(ExperimentConfig::from_json({{"preset", "paper"}}).to_json() == full.to_json());

    const auto desk = ExperimentConfig::desk();
    CHECK(desk.synthetic.height <= 32);
    CHECK(desk.synthetic.width <= 64);
    CHECK(desk.p == 3);
    CHECK(desk.q == 5);
    CHECK(desk.epochs <= 30);
    CHECK(desk.batch_size <= 8);

    CHECK(ExperimentConfig::from_json({{"epochs", 7}}).epochs == 7);
    CHECK(code_of([] { ExperimentConfig::from_json({{"epoch", 7}}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { ExperimentConfig::from_json({{"p", 2}}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([] { ExperimentConfig::from_json({{"q", 0}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("zero-epoch run: checkpoint equals initialization, empty log") {
    ExperimentConfig c = tiny_config();
    c.epochs = 0;
    const Dataset ds = load_experiment_dataset(c);
    const auto dir = fresh_dir("sstode_zero_epoch");
    TrainOptions opts;
    opts.out_dir = dir;
    const TrainResult r = train(c, ds, opts);
    CHECK(r.log.empty());
    const SstOdeModel model(c.model, ds.grid, ds.orography);
    ad::ParamSet init;
    model.init(init, c.seed, r.kappa_init);
    CHECK(r.params.values_equal(init));
    const auto [loaded, cfg] = load_checkpoint(dir);
    CHECK(loaded.values_equal(init));
    CHECK(cfg.to_json() == c.to_json());
    CHECK(slurp(dir / "train_log.jsonl").empty());
    fs::remove_all(dir);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
    const ExperimentConfig c = tiny_config();
    const Dataset ds = load_experiment_dataset(c);
    const auto d1 = fresh_dir("sstode_det_1"), d2 = fresh_dir("sstode_det_2");
    TrainOptions o1, o2;
    o1.out_dir = d1;
    o2.out_dir = d2;
    const TrainResult a = train(c, ds, o1);
    const TrainResult b = train(c, ds, o2);
    REQUIRE(a.log.size() == 2);
    CHECK(a.params.values_equal(b.params));
    for (std::size_t k = 0; k < a.log.size(); ++k) {
        CHECK(a.log[k].loss == b.log[k].loss);
        CHECK(a.log[k].lr == b.log[k].lr);
        CHECK(std::isfinite(a.log[k].loss));
    }
    CHECK(slurp(d1 / "checkpoint.bin") == slurp(d2 / "checkpoint.bin"));
    CHECK(slurp(d1 / "checkpoint.json") == slurp(d2 / "checkpoint.json"));
    const auto [loaded, cfg] = load_checkpoint(d1);
    CHECK(loaded.values_equal(a.params));

    // A checkpoint from another architecture is rejected.
    ModelConfig other = c.model;
    other.fs_hidden = 6;
    const SstOdeModel wrong(other, ds.grid, ds.orography);
    CHECK(code_of([&] { wrong.check_compatible(loaded); }) == ErrorCode::IncompatibleCheckpoint);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("untrained model with zero velocity and no diffusion is persistence") {
    const auto g = island_grid(8, 10, 2, 4, 3, 6);
    ModelConfig mc;
    mc.diffusivity = Diffusivity::none;
    mc.fv_hidden = 4;
    mc.fv_blocks = 1;
    mc.fv_attention_pool = 2;
    mc.fs_hidden = 4;
    mc.fs_blocks = 1;
    const SstOdeModel model(mc, g);
    ad::ParamSet ps;
    model.init(ps, 1, 0.1);
    std::mt19937_64 rng(2);
    const Tensor y0({1, 8, 10}, random_field(g, rng).values);
    const Tensor forcing({4, 8, 10}, 0.0);
    ad::Tape t;
    const auto vars = model.forecast(t, ps, y0, Tensor({2, 8, 10}, 0.0), forcing, 12.0, {18.0, 24.0, 30.0});
    REQUIRE(vars.corrected.size() == 3);
    for (const auto& v : vars.corrected) CHECK(v.value().vec() == y0.vec());
    for (const auto& v : vars.ode) CHECK(v.value().vec() == y0.vec());
}

TEST_CASE("forecast pipeline, decomposition export and q = 0") {
    const ExperimentConfig c = tiny_config();
    const Dataset ds = load_experiment_dataset(c);
    const SstOdeModel model(c.model, ds.grid, ds.orography);
    ad::ParamSet ps;
    model.init(ps, c.seed, 0.1);
    const auto windows = make_windows(ds, c.p, 3, Split::test);
    REQUIRE(!windows.empty());
    const Window& w = windows.front();
    VelocityCache cache;
    const ForecastResult r = forecast(model, ps, w, w.target_times, c.velocity, &cache);
    CHECK(r.forecast.size() == 3);
    CHECK(r.velocity.size() == 3);
    CHECK(r.forecast.times == w.target_times);
    for (const auto& f : r.forecast.frames)
        for (double v : f) CHECK(std::isfinite(v));
    // Fresh source head: the correction is exactly zero.
    CHECK(r.forecast.frames == r.ode.frames);
    CHECK(code_of([&] { forecast(model, ps, w, {}, c.velocity); }) == ErrorCode::InvalidArgument);

    // Second call hits the velocity cache.
    forecast(model, ps, w, w.target_times, c.velocity, &cache);
    CHECK(cache.size() == 1);
    CHECK(cache.hits() == 1);

    const auto groups = decomposition_groups();
    CHECK(groups == std::vector<std::string>{"sst", "sst_variation", "velocity", "advection", "diffusion", "source"});
    const auto dir = fresh_dir("sstode_export");
    Trajectory truth;
    truth.grid = ds.grid;
    for (std::size_t k = 0; k < w.targets.size(); ++k) truth.push(w.target_times[k], w.targets[k]);
    export_decomposition(r, &truth, dir / "dec.json");
    const auto m = io::read_json(dir / "dec.json");
    CHECK(m.contains("groups"));
    CHECK(m["groups"].size() == 6);
    for (const auto& grp : groups) CHECK(fs::exists(dir / ("dec." + grp + ".bin")));
    fs::remove_all(dir);
}

TEST_CASE("evaluation reports coastal and open cells") {
    const ExperimentConfig c = tiny_config();
    const Dataset ds = load_experiment_dataset(c);
    const SstOdeModel model(c.model, ds.grid, ds.orography);
    ad::ParamSet ps;
    model.init(ps, c.seed, 0.1);
    const EvalResult r = evaluate_split(model, ps, ds, Split::test, c.p, c.q, c.velocity, 2);
    CHECK(r.windows == 2);
    CHECK(r.has_coast);
    CHECK(r.coastal.cell_count + r.open.cell_count == r.all.cell_count);
    CHECK(std::isfinite(r.all.mse));
    CHECK(r.all.step_mse.size() == c.q);
}

TEST_CASE("ablation variants and stable steps") {
    const ExperimentConfig base = tiny_config();
    std::vector<std::string> labels;
    const auto diff = ablation_variants(base, "diffusion", &labels);
    REQUIRE(diff.size() == 4);
    CHECK(diff[0].model.diffusivity == Diffusivity::none);
    CHECK(diff[1].model.diffusivity == Diffusivity::fixed);
    CHECK(diff[2].model.diffusivity == Diffusivity::map);
    CHECK(diff[3].model.diffusivity == Diffusivity::scalar);
    for (const auto& v : diff) CHECK(v.seed == base.seed);
    const auto src = ablation_variants(base, "source", &labels);
    REQUIRE(src.size() == 6);
    CHECK_FALSE(src[0].model.flux.enabled());
    CHECK(src[1].model.flux == FluxSubset::parse("sw"));
    CHECK(src[5].model.flux == FluxSubset::all());
    CHECK_THROWS_AS(ablation_variants(base, "bogus"), Error);
    CHECK(run_ablation({}, {}, load_experiment_dataset(base)).empty());

    const auto g = GridSpec::global(8, 8);
    CHECK(stable_step(1.0, 6.0, 1.0, *g) == 0.25);
    CHECK(stable_step(1.0, 6.0, 0.1, *g) == 1.0);
}
