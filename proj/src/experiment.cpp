#include "sstode/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "sstode/errors.hpp"
#include "sstode/io.hpp"
#include "sstode/optim.hpp"

namespace sstode {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::desk() {
    ExperimentConfig c;
    c.synthetic.kind = SyntheticKind::advdiff;
    c.synthetic.height = 16;
    c.synthetic.width = 32;
    c.synthetic.length = 60;
    c.synthetic.cadence_hours = 6.0;
    c.synthetic.kappa = 0.2;
    c.synthetic.u = 0.5;
    c.synthetic.v = -0.3;
    c.synthetic.max_wavenumber = 3;
    c.synthetic.continents = {Continent{5, 10, 12, 18}};
    c.model.fv_hidden = 8;
    c.model.fv_blocks = 2;
    c.model.fv_attention_pool = 4;
    c.model.fs_hidden = 8;
    c.model.fs_blocks = 2;
    // Central-difference advection is unstable under forward Euler once
    // diffusion is switched off; RK4 keeps every ablation variant stable.
    c.model.solver = Solver::rk4;
    c.optim.lr = 5e-3;
    c.epochs = 8;
    c.batch_size = 8;
    c.velocity.rbf = true;
    c.max_train_windows = 12;
    c.max_eval_windows = 8;
    return c;
}

ExperimentConfig ExperimentConfig::paper() {
    ExperimentConfig c;
    c.synthetic.height = 32;
    c.synthetic.width = 64;
    c.model.fv_blocks = 3;
    c.optim.lr = 5e-4;
    c.epochs = 50;
    c.batch_size = 16;
    return c;
}

namespace {

const char* solver_name(Solver s) { return s == Solver::euler ? "euler" : "rk4"; }

Solver parse_solver(const std::string& s) {
    if (s == "euler") return Solver::euler;
    if (s == "rk4") return Solver::rk4;
    throw Error(ErrorCode::InvalidArgument, "unknown solver '" + s + "' (euler|rk4)");
}

const char* initial_name(InitialCondition i) { return i == InitialCondition::modes ? "modes" : "sin_mode"; }

InitialCondition parse_initial(const std::string& s) {
    if (s == "modes") return InitialCondition::modes;
    if (s == "sin_mode") return InitialCondition::sin_mode;
    throw Error(ErrorCode::InvalidArgument, "unknown initial condition '" + s + "'");
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("config field '") + key + "': " + e.what());
    }
}

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config section '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        require(known, ErrorCode::InvalidArgument, "unknown config field '" + where + "." + it.key() + "'");
    }
}

} // namespace

json ExperimentConfig::to_json() const {
    json cont = json::array();
    for (const auto& c : synthetic.continents) cont.push_back({c.row0, c.row1, c.col0, c.col1});
    const auto& s = synthetic;
    return {
        {"dataset", dataset},
        {"synthetic",
         {{"kind", to_string(s.kind)},
          {"height", s.height},
          {"width", s.width},
          {"boundary_y", s.boundary_y == Boundary::periodic ? "periodic" : "reflective"},
          {"kappa", s.kappa},
          {"u", s.u},
          {"v", s.v},
          {"source_amplitude", s.source_amplitude},
          {"flux_scale", s.flux_scale},
          {"cadence_hours", s.cadence_hours},
          {"length", s.length},
          {"t_start", s.t_start},
          {"substeps", s.substeps},
          {"initial", initial_name(s.initial)},
          {"mode_k", s.mode_k},
          {"mode_l", s.mode_l},
          {"max_wavenumber", s.max_wavenumber},
          {"continents", cont},
          {"coastal_anomaly", s.coastal_anomaly},
          {"coastal_width", s.coastal_width},
          {"train_fraction", s.train_fraction},
          {"val_fraction", s.val_fraction}}},
        {"p", p},
        {"q", q},
        {"model",
         {{"diffusivity", to_string(model.diffusivity)},
          {"flux", model.flux.to_string()},
          {"velocity_net", model.velocity_net},
          {"fv_hidden", model.fv_hidden},
          {"fv_blocks", model.fv_blocks},
          {"fv_attention_pool", model.fv_attention_pool},
          {"fs_hidden", model.fs_hidden},
          {"fs_blocks", model.fs_blocks},
          {"step", model.step},
          {"solver", solver_name(model.solver)}}},
        {"optim",
         {{"kind", optim.kind},
          {"lr", optim.lr},
          {"weight_decay", optim.weight_decay},
          {"cosine", optim.cosine},
          {"min_lr_ratio", optim.min_lr_ratio}}},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"seed", seed},
        {"velocity",
         {{"lr", velocity.lr},
          {"epochs", velocity.epochs},
          {"alpha", velocity.alpha},
          {"rbf", velocity.rbf},
          {"rbf_bandwidth", velocity.rbf_bandwidth},
          {"rbf_weight", velocity.rbf_weight},
          {"kappa_init", velocity.kappa_init},
          {"kappa_lr", velocity.kappa_lr},
          {"cosine", velocity.cosine},
          {"warmup_fraction", velocity.warmup_fraction}}},
        {"max_train_windows", max_train_windows},
        {"max_eval_windows", max_eval_windows},
    };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    check_keys(j,
               {"preset", "dataset", "synthetic", "p", "q", "model", "optim", "epochs", "batch_size", "seed", "velocity",
                "max_train_windows", "max_eval_windows"},
               "config");
    const std::string preset = j.value("preset", std::string("desk"));
    require(preset == "desk" || preset == "paper", ErrorCode::InvalidArgument, "preset must be desk or paper");
    ExperimentConfig c = preset == "desk" ? desk() : paper();
    take(j, "dataset", c.dataset);
    take(j, "p", c.p);
    take(j, "q", c.q);
    take(j, "epochs", c.epochs);
    take(j, "batch_size", c.batch_size);
    take(j, "seed", c.seed);
    take(j, "max_train_windows", c.max_train_windows);
    take(j, "max_eval_windows", c.max_eval_windows);
    if (j.contains("synthetic")) {
        const json& s = j["synthetic"];
        check_keys(s,
                   {"kind", "height", "width", "boundary_y", "kappa", "u", "v", "source_amplitude", "flux_scale",
                    "cadence_hours", "length", "t_start", "substeps", "initial", "mode_k", "mode_l", "max_wavenumber",
                    "continents", "coastal_anomaly", "coastal_width", "train_fraction", "val_fraction"},
                   "synthetic");
        auto& d = c.synthetic;
        if (s.contains("kind")) d.kind = parse_synthetic_kind(s["kind"].get<std::string>());
        if (s.contains("boundary_y"))
            d.boundary_y = s["boundary_y"].get<std::string>() == "periodic" ? Boundary::periodic : Boundary::reflective;
        if (s.contains("initial")) d.initial = parse_initial(s["initial"].get<std::string>());
        take(s, "height", d.height);
        take(s, "width", d.width);
        take(s, "kappa", d.kappa);
        take(s, "u", d.u);
        take(s, "v", d.v);
        take(s, "source_amplitude", d.source_amplitude);
        take(s, "flux_scale", d.flux_scale);
        take(s, "cadence_hours", d.cadence_hours);
        take(s, "length", d.length);
        take(s, "t_start", d.t_start);
        take(s, "substeps", d.substeps);
        take(s, "mode_k", d.mode_k);
        take(s, "mode_l", d.mode_l);
        take(s, "max_wavenumber", d.max_wavenumber);
        take(s, "coastal_anomaly", d.coastal_anomaly);
        take(s, "coastal_width", d.coastal_width);
        take(s, "train_fraction", d.train_fraction);
        take(s, "val_fraction", d.val_fraction);
        if (s.contains("continents")) {
            d.continents.clear();
            for (const auto& r : s["continents"]) {
                const auto v = r.get<std::vector<std::size_t>>();
                require(v.size() == 4, ErrorCode::InvalidArgument, "continent needs [row0,row1,col0,col1]");
                d.continents.push_back({v[0], v[1], v[2], v[3]});
            }
        }
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m,
                   {"diffusivity", "flux", "velocity_net", "fv_hidden", "fv_blocks", "fv_attention_pool", "fs_hidden",
                    "fs_blocks", "step", "solver"},
                   "model");
        if (m.contains("diffusivity")) c.model.diffusivity = parse_diffusivity(m["diffusivity"].get<std::string>());
        if (m.contains("flux")) c.model.flux = FluxSubset::parse(m["flux"].get<std::string>());
        if (m.contains("solver")) c.model.solver = parse_solver(m["solver"].get<std::string>());
        take(m, "velocity_net", c.model.velocity_net);
        take(m, "fv_hidden", c.model.fv_hidden);
        take(m, "fv_blocks", c.model.fv_blocks);
        take(m, "fv_attention_pool", c.model.fv_attention_pool);
        take(m, "fs_hidden", c.model.fs_hidden);
        take(m, "fs_blocks", c.model.fs_blocks);
        take(m, "step", c.model.step);
    }
    if (j.contains("optim")) {
        const json& o = j["optim"];
        check_keys(o, {"kind", "lr", "weight_decay", "cosine", "min_lr_ratio"}, "optim");
        take(o, "kind", c.optim.kind);
        take(o, "lr", c.optim.lr);
        take(o, "weight_decay", c.optim.weight_decay);
        take(o, "cosine", c.optim.cosine);
        take(o, "min_lr_ratio", c.optim.min_lr_ratio);
        require(c.optim.kind == "adam" || c.optim.kind == "adamw", ErrorCode::InvalidArgument,
                "optim.kind must be adam or adamw");
    }
    if (j.contains("velocity")) {
        const json& v = j["velocity"];
        check_keys(v,
                   {"lr", "epochs", "alpha", "rbf", "rbf_bandwidth", "rbf_weight", "kappa_init", "kappa_lr", "cosine",
                    "warmup_fraction"},
                   "velocity");
        take(v, "lr", c.velocity.lr);
        take(v, "epochs", c.velocity.epochs);
        take(v, "alpha", c.velocity.alpha);
        take(v, "rbf", c.velocity.rbf);
        take(v, "rbf_bandwidth", c.velocity.rbf_bandwidth);
        take(v, "rbf_weight", c.velocity.rbf_weight);
        take(v, "kappa_init", c.velocity.kappa_init);
        take(v, "kappa_lr", c.velocity.kappa_lr);
        take(v, "cosine", c.velocity.cosine);
        take(v, "warmup_fraction", c.velocity.warmup_fraction);
    }
    require(c.p >= 3, ErrorCode::InvalidArgument, "p must be at least 3");
    require(c.q >= 1, ErrorCode::InvalidArgument, "q must be at least 1");
    require(c.batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be at least 1");
    require(c.model.step > 0, ErrorCode::InvalidArgument, "model.step must be positive");
    return c;
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
    if (!cfg.dataset.empty()) return load_dataset(cfg.dataset);
    Dataset ds = gen_synthetic(cfg.synthetic, cfg.seed);
    standardize(ds);
    return ds;
}

// ---------------------------------------------------------------- model

namespace {
constexpr const char* kKappaName = "kappa_raw";
}

SstOdeModel::SstOdeModel(ModelConfig cfg, GridPtr grid, std::vector<double> orography)
    : cfg_(cfg),
      grid_(grid),
      embed_(grid, std::move(orography)),
      fv_(cfg.fv_hidden, cfg.fv_blocks, cfg.fv_attention_pool),
      fs_(cfg.fs_hidden, cfg.fs_blocks),
      system_(grid, cfg.velocity_net ? &fv_ : nullptr, &embed_) {}

IntegrateConfig SstOdeModel::integrate_config() const {
    IntegrateConfig ic;
    ic.step = cfg_.step;
    ic.solver = cfg_.solver;
    return ic;
}

void SstOdeModel::init(ad::ParamSet& params, std::uint64_t seed, double kappa_init) const {
    require(kappa_init > 0, ErrorCode::NonPositiveKappa, "kappa_init must be positive");
    const GridSpec& g = *grid_;
    if (cfg_.diffusivity == Diffusivity::scalar)
        params.add(kKappaName, Tensor::scalar(softplus_inverse(kappa_init)));
    else if (cfg_.diffusivity == Diffusivity::map)
        params.add(kKappaName, Tensor({g.height(), g.width()}, softplus_inverse(kappa_init)));
    if (cfg_.velocity_net) fv_.init(params, seed * 2 + 1);
    if (cfg_.flux.enabled()) fs_.init(params, seed * 2 + 2);
}

void SstOdeModel::check_compatible(const ad::ParamSet& params) const {
    ad::ParamSet expected;
    init(expected, 0, 0.1);
    std::string problem;
    for (const auto& [name, e] : expected.entries()) {
        if (!params.contains(name))
            problem = "missing '" + name + "'";
        else if (params.at(name).value.shape() != e.value.shape())
            problem = "'" + name + "' has shape " + shape_string(params.at(name).value.shape()) + ", expected " +
                      shape_string(e.value.shape());
        if (!problem.empty()) break;
    }
    if (problem.empty() && params.entries().size() != expected.entries().size())
        problem = "checkpoint has " + std::to_string(params.entries().size()) + " entries, model expects " +
                  std::to_string(expected.entries().size());
    if (!problem.empty()) throw Error(ErrorCode::IncompatibleCheckpoint, problem);
}

ad::Var SstOdeModel::kappa(ad::Tape& tape, ad::ParamSet& params) const {
    switch (cfg_.diffusivity) {
        case Diffusivity::none: return {};
        case Diffusivity::fixed: return tape.constant(Tensor::scalar(1.0));
        case Diffusivity::scalar:
        case Diffusivity::map: return ad::softplus(tape.param(params, kKappaName));
    }
    return {};
}

SstOdeModel::Vars SstOdeModel::forecast(ad::Tape& tape, ad::ParamSet& params, const Tensor& y0, const Tensor& v0,
                                        const Tensor& forcing, double t0, const std::vector<double>& times) const {
    const GridSpec& g = *grid_;
    Vars out;
    const ad::Var kappa = this->kappa(tape, params);
    const auto roll = system_.unroll(tape, params, tape.constant(y0.reshaped({1, g.height(), g.width()})),
                                     tape.constant(v0), kappa, t0, times, integrate_config());
    out.ode = roll.sst;
    out.velocity = roll.velocity;
    if (cfg_.flux.enabled()) {
        const ad::Var h0 = tape.constant(flux_subset(forcing, cfg_.flux));
        for (std::size_t k = 0; k < times.size(); ++k) {
            const ad::Var q = fs_.forward(tape, params, g, h0, roll.sst[k], tape.constant(embed_.build(times[k])));
            out.source.push_back(q);
            out.corrected.push_back(roll.sst[k] + q);
        }
    } else {
        out.corrected = roll.sst;
    }
    return out;
}

// ---------------------------------------------------------------- cache

const VelocityEstimate& VelocityCache::get(const Trajectory& history, const VelocityInitConfig& cfg) {
    std::vector<std::uint8_t> bytes;
    for (const auto& f : history.frames) io::append_f64_le(bytes, f);
    io::append_f64_le(bytes, history.times);
    const std::vector<double> settings{cfg.lr,
                                       static_cast<double>(cfg.epochs),
                                       cfg.alpha,
                                       cfg.rbf ? 1.0 : 0.0,
                                       cfg.rbf_bandwidth,
                                       cfg.rbf_weight,
                                       cfg.kappa_init,
                                       cfg.kappa_lr,
                                       cfg.cosine ? 1.0 : 0.0,
                                       cfg.warmup_fraction};
    io::append_f64_le(bytes, settings);
    bytes.insert(bytes.end(), history.grid->mask().begin(), history.grid->mask().end());
    const std::uint64_t key = io::fnv1a64(bytes);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
        ++hits_;
        return it->second;
    }
    return entries_.emplace(key, estimate_initial_velocity(history, cfg)).first->second;
}

// ---------------------------------------------------------------- training

namespace {

struct Prepared {
    const Window* window;
    Tensor y0;  // [1,H,W]
    Tensor v0;  // [2,H,W]
    double kappa = 0.0;
};

Tensor velocity_tensor(const VectorField& v) {
    const GridSpec& g = *v.grid;
    Tensor t({2, g.height(), g.width()});
    std::copy(v.u.begin(), v.u.end(), t.vec().begin());
    std::copy(v.v.begin(), v.v.end(), t.vec().begin() + static_cast<std::ptrdiff_t>(g.cells()));
    return t;
}

Prepared prepare(const Window& w, const GridPtr& grid, const VelocityInitConfig& vcfg, VelocityCache& cache) {
    const VelocityEstimate& est = cache.get(w.history(grid), vcfg);
    return {&w, Tensor({1, grid->height(), grid->width()}, w.inputs.back()), velocity_tensor(est.velocity), est.kappa()};
}

std::vector<Window> pick(std::vector<Window> all, std::size_t cap) {
    if (cap == 0 || all.size() <= cap) return all;
    std::vector<Window> out;
    for (std::size_t k = 0; k < cap; ++k) out.push_back(all[k * all.size() / cap]);
    return out;
}

ad::Var window_loss(const SstOdeModel& model, ad::Tape& tape, ad::ParamSet& params, const Prepared& pw) {
    const Window& w = *pw.window;
    const GridSpec& g = *model.grid();
    const auto vars = model.forecast(tape, params, pw.y0, pw.v0, w.forcing, w.t0(), w.target_times);
    ad::Var loss;
    for (std::size_t k = 0; k < vars.corrected.size(); ++k) {
        const ad::Var target = tape.constant(Tensor({1, g.height(), g.width()}, w.targets[k]));
        const ad::Var l = mse_loss(vars.corrected[k], target, g);
        loss = loss.valid() ? loss + l : l;
    }
    return ad::scale(loss, 1.0 / static_cast<double>(vars.corrected.size()));
}

} // namespace

TrainResult train(const ExperimentConfig& cfg, const Dataset& ds, const TrainOptions& opts) {
    VelocityCache local_cache;
    VelocityCache& cache = opts.cache ? *opts.cache : local_cache;
    const SstOdeModel model(cfg.model, ds.grid, ds.orography);

    const std::vector<Window> windows = pick(make_windows(ds, cfg.p, cfg.q, Split::train), cfg.max_train_windows);
    std::vector<Prepared> prepared;
    prepared.reserve(windows.size());
    double kappa_sum = 0;
    for (const auto& w : windows) {
        prepared.push_back(prepare(w, ds.grid, cfg.velocity, cache));
        kappa_sum += prepared.back().kappa;
    }

    TrainResult res;
    // The learnable diffusivity starts from the preprocessing estimate.
    res.kappa_init = prepared.empty() ? cfg.velocity.kappa_init : kappa_sum / static_cast<double>(prepared.size());
    res.kappa_init = std::max(res.kappa_init, 1e-4);
    model.init(res.params, cfg.seed, res.kappa_init);

    ad::AdamState adam;
    adam.lr = cfg.optim.lr;
    adam.weight_decay = cfg.optim.weight_decay;
    adam.decoupled = cfg.optim.kind == "adamw";
    const std::size_t batches = (prepared.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.optim.cosine) adam.schedule = ad::CosineSchedule{std::max<std::size_t>(1, batches * cfg.epochs), cfg.optim.min_lr_ratio};

    std::ofstream log_file;
    if (!opts.out_dir.empty()) {
        fs::create_directories(opts.out_dir);
        log_file.open(opts.out_dir / "train_log.jsonl", std::ios::trunc);
        require(log_file.good(), ErrorCode::CheckpointWriteFailure, "cannot open training log in " + opts.out_dir.string());
    }

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < cfg.epochs && !prepared.empty(); ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        const double lr_at_start = adam.current_lr();
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(prepared.size(), lo + cfg.batch_size);
            res.params.zero_grads();
            for (std::size_t i = lo; i < hi; ++i) {
                ad::Tape tape;
                const ad::Var loss = window_loss(model, tape, res.params, prepared[order[i]]);
                const double value = loss.item();
                if (!std::isfinite(value))
                    throw Error(ErrorCode::DivergedLoss, "training loss is not finite at epoch " + std::to_string(epoch));
                total += value;
                tape.backward(ad::scale(loss, 1.0 / static_cast<double>(hi - lo)));
            }
            ad::adam_step(res.params, adam);
        }
        TrainLogEntry e;
        e.epoch = epoch;
        e.loss = total / static_cast<double>(prepared.size());
        e.lr = lr_at_start;
        e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        res.log.push_back(e);
        if (log_file.is_open()) {
            log_file << json{{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}, {"wall_seconds", e.wall_seconds}}.dump()
                     << '\n';
            log_file.flush();
        }
        if (opts.on_epoch) opts.on_epoch(e);
    }
    if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir, res.params, cfg);
    return res;
}

void save_checkpoint(const fs::path& dir, const ad::ParamSet& params, const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    io::save_params(params, dir / "checkpoint", json{{"config", cfg.to_json()}});
}

std::pair<ad::ParamSet, ExperimentConfig> load_checkpoint(const fs::path& dir) {
    json meta;
    ad::ParamSet params = io::load_params(dir / "checkpoint", &meta);
    if (!meta.contains("config"))
        throw Error(ErrorCode::IncompatibleCheckpoint, "checkpoint in " + dir.string() + " carries no config");
    return {std::move(params), ExperimentConfig::from_json(meta["config"])};
}

// ---------------------------------------------------------------- forecast

ForecastResult forecast(const SstOdeModel& model, ad::ParamSet& params, const Window& window,
                        const std::vector<double>& times, const VelocityInitConfig& vcfg, VelocityCache* cache) {
    require(!times.empty(), ErrorCode::InvalidArgument, "forecast: q must be at least 1");
    model.check_compatible(params);
    const GridPtr& grid = model.grid();
    const GridSpec& g = *grid;
    VelocityCache local;
    VelocityCache& c = cache ? *cache : local;
    ForecastResult res;
    res.v0 = c.get(window.history(grid), vcfg);
    const Prepared pw{&window, Tensor({1, g.height(), g.width()}, window.inputs.back()), velocity_tensor(res.v0.velocity),
                      res.v0.kappa()};

    ad::Tape tape;
    const auto vars = model.forecast(tape, params, pw.y0, pw.v0, window.forcing, window.t0(), times);
    const ad::Var kappa = model.kappa(tape, params);
    for (Trajectory* t : {&res.forecast, &res.ode, &res.source, &res.advection, &res.diffusion}) t->grid = grid;
    const std::size_t n = g.cells();
    for (std::size_t k = 0; k < times.size(); ++k) {
        res.forecast.push(times[k], vars.corrected[k].value().vec());
        res.ode.push(times[k], vars.ode[k].value().vec());
        res.source.push(times[k], vars.source.empty() ? std::vector<double>(n, 0.0) : vars.source[k].value().vec());
        const Tensor& v = vars.velocity[k].value();
        VectorField vf(grid);
        std::copy(v.vec().begin(), v.vec().begin() + static_cast<std::ptrdiff_t>(n), vf.u.begin());
        std::copy(v.vec().begin() + static_cast<std::ptrdiff_t>(n), v.vec().end(), vf.v.begin());
        const ScalarField y(grid, vars.ode[k].value().vec());
        res.advection.push(times[k], advection_term(y, vf).values);
        std::vector<double> diff(n, 0.0);
        if (kappa.valid()) {
            const ScalarField lap = laplacian(y);
            const Tensor& kv = kappa.value();
            for (std::size_t i = 0; i < n; ++i) diff[i] = (kv.size() == 1 ? kv[0] : kv[i]) * lap.values[i];
        }
        res.diffusion.push(times[k], std::move(diff));
        res.velocity.push_back(std::move(vf));
    }
    return res;
}

std::vector<std::string> decomposition_groups() {
    return {"sst", "sst_variation", "velocity", "advection", "diffusion", "source"};
}

void export_decomposition(const ForecastResult& res, const Trajectory* truth, const fs::path& manifest) {
    const GridSpec& g = *res.forecast.grid;
    const fs::path dir = manifest.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const std::string stem = manifest.stem().string();
    const std::size_t q = res.forecast.size();
    const Trajectory& sst = truth ? *truth : res.forecast;
    require(sst.size() == q, ErrorCode::LengthMismatch, "export: truth has a different length");

    std::map<std::string, std::vector<std::vector<double>>> planes;  // group -> per step flattened [C,H,W]
    for (std::size_t k = 0; k < q; ++k) {
        const auto& y = sst.frames[k];
        std::vector<double> dy(g.cells());
        const auto& prev = k == 0 ? res.forecast.frames[0] : sst.frames[k - 1];
        for (std::size_t i = 0; i < g.cells(); ++i) dy[i] = k == 0 ? 0.0 : y[i] - prev[i];
        std::vector<double> vel = res.velocity[k].u;
        vel.insert(vel.end(), res.velocity[k].v.begin(), res.velocity[k].v.end());
        planes["sst"].push_back(y);
        planes["sst_variation"].push_back(std::move(dy));
        planes["velocity"].push_back(std::move(vel));
        planes["advection"].push_back(res.advection.frames[k]);
        planes["diffusion"].push_back(res.diffusion.frames[k]);
        planes["source"].push_back(res.source.frames[k]);
    }
    json m;
    m["format"] = "sstode-decomposition";
    m["version"] = 1;
    m["dtype"] = "f64";
    m["byte_order"] = "little-endian";
    m["layout"] = "row-major [T,C,H,W]";
    m["dims"] = {{"time", q}, {"height", g.height()}, {"width", g.width()}};
    m["times"] = res.forecast.times;
    m["sst_source"] = truth ? "truth" : "forecast";
    json groups = json::array();
    for (const auto& name : decomposition_groups()) {
        std::vector<std::uint8_t> bytes;
        for (const auto& f : planes[name]) io::append_f64_le(bytes, f);
        const std::string blob = stem + "." + name + ".bin";
        io::atomic_write(dir / blob, bytes);
        groups.push_back({{"name", name},
                          {"channels", name == "velocity" ? 2 : 1},
                          {"blob", blob},
                          {"checksum", io::checksum_string(bytes)}});
    }
    m["groups"] = groups;
    io::atomic_write_text(manifest, m.dump(2));
}

// ---------------------------------------------------------------- evaluation

EvalResult evaluate_split(const SstOdeModel& model, ad::ParamSet& params, const Dataset& ds, Split split, std::size_t p,
                          std::size_t q, const VelocityInitConfig& vcfg, std::size_t max_windows, VelocityCache* cache) {
    const GridPtr& grid = ds.grid;
    const Normalization norm = ds.normalization.count(kSstName) ? ds.normalization.at(kSstName) : Normalization{};
    const std::vector<Window> windows = pick(make_windows(ds, p, q, split), max_windows);
    require(!windows.empty(), ErrorCode::EmptyEvaluation, "no evaluation windows");
    EvalResult res;
    MetricAccumulator all(grid, norm);
    const auto coast = grid->coastal_cells();
    std::vector<std::uint8_t> open(grid->cells());
    for (std::size_t i = 0; i < grid->cells(); ++i) {
        open[i] = grid->ocean(i) && !coast[i];
        res.has_coast = res.has_coast || coast[i];
    }
    std::optional<MetricAccumulator> acc_coast, acc_open;
    if (res.has_coast) {
        acc_coast.emplace(grid, norm, EvalSelection{std::nullopt, coast});
        acc_open.emplace(grid, norm, EvalSelection{std::nullopt, open});
    }
    VelocityCache local;
    VelocityCache& c = cache ? *cache : local;
    for (const auto& w : windows) {
        const ForecastResult f = forecast(model, params, w, w.target_times, vcfg, &c);
        all.add(f.forecast.frames, w.targets);
        if (res.has_coast) {
            acc_coast->add(f.forecast.frames, w.targets);
            acc_open->add(f.forecast.frames, w.targets);
        }
    }
    res.windows = windows.size();
    res.all = all.report();
    if (res.has_coast) {
        res.coastal = acc_coast->report();
        res.open = acc_open->report();
    }
    return res;
}

double stable_step(double requested, double cadence, double kappa, const GridSpec& g) {
    require(requested > 0 && cadence > 0, ErrorCode::InvalidArgument, "stable_step: positive inputs required");
    double dx_min = g.dx();
    for (std::size_t r = 0; r < g.height(); ++r) dx_min = std::min(dx_min, g.dx_at(r));
    for (std::size_t div = static_cast<std::size_t>(std::ceil(cadence / requested - 1e-9)); div < 100000; ++div) {
        const double step = cadence / static_cast<double>(div);
        if (step <= requested + 1e-12 && stability_bound(kappa, dx_min, g.dy(), step)) return step;
    }
    throw Error(ErrorCode::UnstableParams, "no stable solver step found");
}

std::vector<ExperimentConfig> ablation_variants(const ExperimentConfig& base, const std::string& study,
                                                std::vector<std::string>* labels) {
    std::vector<ExperimentConfig> out;
    std::vector<std::string> names;
    if (study == "diffusion") {
        const std::pair<Diffusivity, const char*> rows[] = {{Diffusivity::none, "SSTODE w/o diffusion"},
                                                            {Diffusivity::fixed, "SSTODE kappa (fixed)"},
                                                            {Diffusivity::map, "SSTODE kappa (2D)"},
                                                            {Diffusivity::scalar, "SSTODE"}};
        for (const auto& [d, label] : rows) {
            ExperimentConfig c = base;
            c.model.diffusivity = d;
            out.push_back(c);
            names.emplace_back(label);
        }
    } else if (study == "source") {
        const std::pair<const char*, const char*> rows[] = {{"none", "SSTODE w/o source"}, {"sw", "SSTODE + SW"},
                                                            {"lw", "SSTODE + LW"},         {"lhf", "SSTODE + LHF"},
                                                            {"shf", "SSTODE + SHF"},       {"all", "SSTODE"}};
        for (const auto& [flux, label] : rows) {
            ExperimentConfig c = base;
            c.model.flux = FluxSubset::parse(flux);
            out.push_back(c);
            names.emplace_back(label);
        }
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown ablation study '" + study + "' (diffusion|source)");
    }
    if (labels) *labels = names;
    return out;
}

std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& configs,
                                      const std::vector<std::string>& labels, const Dataset& ds,
                                      VelocityCache* cache) {
    require(labels.size() == configs.size(), ErrorCode::LengthMismatch, "ablation: one label per config");
    VelocityCache local;
    VelocityCache& c = cache ? *cache : local;
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        ExperimentConfig cfg = configs[i];
        if (cfg.model.diffusivity == Diffusivity::fixed)
            cfg.model.step = stable_step(cfg.model.step, ds.cadence_hours, 1.0, *ds.grid);
        TrainOptions opts;
        opts.cache = &c;
        TrainResult tr = train(cfg, ds, opts);
        const SstOdeModel model(cfg.model, ds.grid, ds.orography);
        const EvalResult ev = evaluate_split(model, tr.params, ds, Split::test, cfg.p, cfg.q, cfg.velocity,
                                             cfg.max_eval_windows, &c);
        AblationRow row{labels[i], ev.all, json::object()};
        row.extra["step_hours"] = cfg.model.step;
        if (ev.has_coast) {
            row.extra["coastal_mse"] = ev.coastal.mse;
            row.extra["open_mse"] = ev.open.mse;
            row.extra["coastal_open_ratio"] = ev.coastal.mse / ev.open.mse;
        }
        if (!tr.log.empty()) row.extra["final_train_loss"] = tr.log.back().loss;
        rows.push_back(std::move(row));
    }
    return rows;
}

RobustnessResult robustness_sweep(const SstOdeModel& model, ad::ParamSet& params, const Dataset& ds,
                                  const ExperimentConfig& cfg, const std::vector<std::size_t>& epochs) {
    RobustnessResult res;
    for (std::size_t e : epochs) {
        VelocityInitConfig v = cfg.velocity;
        v.epochs = e;
        const EvalResult ev = evaluate_split(model, params, ds, Split::test, cfg.p, cfg.q, v, cfg.max_eval_windows);
        res.epochs.push_back(e);
        res.reports.push_back(ev.all);
    }
    if (res.reports.empty()) return res;
    for (const auto& r : res.reports) res.mse_mean += r.mse;
    res.mse_mean /= static_cast<double>(res.reports.size());
    double var = 0;
    for (const auto& r : res.reports) var += (r.mse - res.mse_mean) * (r.mse - res.mse_mean);
    // Sample standard deviation, as in a mean +- std summary row.
    res.mse_std = res.reports.size() > 1 ? std::sqrt(var / static_cast<double>(res.reports.size() - 1)) : 0.0;
    return res;
}

} // namespace sstode
