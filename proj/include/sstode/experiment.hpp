#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sstode/autodiff.hpp"
#include "sstode/data.hpp"
#include "sstode/dynamics.hpp"
#include "sstode/eei.hpp"
#include "sstode/embedding.hpp"
#include "sstode/metrics.hpp"
#include "sstode/nn.hpp"
#include "sstode/velocity_init.hpp"

namespace sstode {

struct ModelConfig {
    Diffusivity diffusivity = Diffusivity::scalar;
    FluxSubset flux = FluxSubset::all();
    /// Learned velocity dynamics; without it V(t0) is held fixed.
    bool velocity_net = true;
    std::size_t fv_hidden = 32;
    std::size_t fv_blocks = 2;
    std::size_t fv_attention_pool = 8;
    std::size_t fs_hidden = 32;
    std::size_t fs_blocks = 2;
    /// Solver step in hours.
    double step = 1.0;
    Solver solver = Solver::euler;
};

struct OptimConfig {
    /// "adamw" or "adam".
    std::string kind = "adamw";
    double lr = 5e-4;
    double weight_decay = 1e-2;
    bool cosine = true;
    double min_lr_ratio = 0.0;
};

/// Everything a run depends on; (config, seed) reproduce it exactly.
struct ExperimentConfig {
    /// Dataset manifest; empty selects the synthetic generator.
    std::string dataset;
    SyntheticParams synthetic;
    std::size_t p = 3;
    std::size_t q = 5;
    ModelConfig model;
    OptimConfig optim;
    std::size_t epochs = 30;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    VelocityInitConfig velocity;
    /// Caps on windows per split (0 = all); windows are picked evenly.
    std::size_t max_train_windows = 0;
    std::size_t max_eval_windows = 0;

    /// Small grid and widths sized for a laptop core.
    static ExperimentConfig desk();
    /// Paper-scale training hyper-parameters (50 epochs, AdamW 5e-4, cosine, batch 16).
    static ExperimentConfig paper();

    nlohmann::json to_json() const;
    /// Fields present in `j` override the preset named by j["preset"] (default desk).
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Standardized dataset for a config: the manifest if given, else the generator.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

/// The full forecaster: velocity-initialized advection-diffusion ODE plus the
/// energy-exchange correction.
class SstOdeModel {
public:
    SstOdeModel(ModelConfig cfg, GridPtr grid, std::vector<double> orography = {});

    /// Adds every parameter; kappa starts at kappa_init.
    void init(ad::ParamSet& params, std::uint64_t seed, double kappa_init) const;
    /// Throws IncompatibleCheckpoint unless `params` has exactly this model's entries and shapes.
    void check_compatible(const ad::ParamSet& params) const;

    /// Positive diffusivity on the tape; invalid for the no-diffusion variant.
    ad::Var kappa(ad::Tape& tape, ad::ParamSet& params) const;

    struct Vars {
        std::vector<ad::Var> ode;        // Y_hat per output time
        std::vector<ad::Var> velocity;   // V per output time
        std::vector<ad::Var> source;     // Q_hat per output time (empty when the EEI path is off)
        std::vector<ad::Var> corrected;  // Y_hat + Q_hat
    };
    /// y0 [1,H,W], v0 [2,H,W], forcing [4,H,W] at t0.
    Vars forecast(ad::Tape& tape, ad::ParamSet& params, const Tensor& y0, const Tensor& v0, const Tensor& forcing,
                  double t0, const std::vector<double>& times) const;

    const ModelConfig& config() const noexcept { return cfg_; }
    const GridPtr& grid() const noexcept { return grid_; }
    const EmbeddingBuilder& embedding() const noexcept { return embed_; }
    IntegrateConfig integrate_config() const;

private:
    ModelConfig cfg_;
    GridPtr grid_;
    EmbeddingBuilder embed_;
    nn::VelocityNet fv_;
    nn::SourceNet fs_;
    OdeSystem system_;
};

/// Memo of initial-velocity estimates keyed by a hash of the inputs and settings.
class VelocityCache {
public:
    const VelocityEstimate& get(const Trajectory& history, const VelocityInitConfig& cfg);
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t hits() const noexcept { return hits_; }

private:
    std::map<std::uint64_t, VelocityEstimate> entries_;
    std::size_t hits_ = 0;
};

struct TrainLogEntry {
    std::size_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ad::ParamSet params;
    std::vector<TrainLogEntry> log;
    double kappa_init = 0.0;
};

struct TrainOptions {
    /// Checkpoint and log directory; empty disables writing.
    std::filesystem::path out_dir;
    VelocityCache* cache = nullptr;
    /// Called after every epoch.
    std::function<void(const TrainLogEntry&)> on_epoch;
};

TrainResult train(const ExperimentConfig& cfg, const Dataset& ds, const TrainOptions& opts = {});

/// Writes `<dir>/checkpoint.{json,bin}` atomically with the config embedded.
void save_checkpoint(const std::filesystem::path& dir, const ad::ParamSet& params, const ExperimentConfig& cfg);
/// Loads a checkpoint and its config.
std::pair<ad::ParamSet, ExperimentConfig> load_checkpoint(const std::filesystem::path& dir);

/// Forecast of one window plus the per-step decomposition.
struct ForecastResult {
    Trajectory forecast;  // corrected, standardized
    Trajectory ode;
    Trajectory source;    // zeros when the EEI path is off
    Trajectory advection;
    Trajectory diffusion;
    std::vector<VectorField> velocity;
    VelocityEstimate v0;
};

ForecastResult forecast(const SstOdeModel& model, ad::ParamSet& params, const Window& window,
                        const std::vector<double>& times, const VelocityInitConfig& vcfg,
                        VelocityCache* cache = nullptr);

/// The six field groups of the decomposition, one entry per output step.
std::vector<std::string> decomposition_groups();
/// Writes the decomposition as a manifest + blobs (layout like datasets).
void export_decomposition(const ForecastResult& res, const Trajectory* truth, const std::filesystem::path& manifest);

struct EvalResult {
    MetricReport all;
    MetricReport coastal;  // empty report when the grid has no coast
    MetricReport open;
    std::size_t windows = 0;
    bool has_coast = false;
};

EvalResult evaluate_split(const SstOdeModel& model, ad::ParamSet& params, const Dataset& ds, Split split,
                          std::size_t p, std::size_t q, const VelocityInitConfig& vcfg, std::size_t max_windows = 0,
                          VelocityCache* cache = nullptr);

/// Ablation studies: "diffusion" (none / fixed / map / scalar) and "source"
/// (none / SW / LW / LHF / SHF / all). Every row trains with the same seed and budget.
std::vector<ExperimentConfig> ablation_variants(const ExperimentConfig& base, const std::string& study,
                                                std::vector<std::string>* labels = nullptr);
std::vector<AblationRow> run_ablation(const std::vector<ExperimentConfig>& configs,
                                      const std::vector<std::string>& labels, const Dataset& ds,
                                      VelocityCache* cache = nullptr);

/// Velocity-estimation epoch sweep: downstream test MSE for each epoch budget.
struct RobustnessResult {
    std::vector<std::size_t> epochs;
    std::vector<MetricReport> reports;
    double mse_mean = 0.0;
    double mse_std = 0.0;
};
RobustnessResult robustness_sweep(const SstOdeModel& model, ad::ParamSet& params, const Dataset& ds,
                                  const ExperimentConfig& cfg, const std::vector<std::size_t>& epochs);

/// Largest step <= requested that divides the cadence and satisfies the explicit diffusion bound.
double stable_step(double requested, double cadence, double kappa, const GridSpec& g);

} // namespace sstode
