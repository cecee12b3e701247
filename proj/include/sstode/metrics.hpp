#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sstode/autodiff.hpp"
#include "sstode/data.hpp"
#include "sstode/grid.hpp"

namespace sstode {

/// Pooled MSE / MAE / ACC over every evaluated (cell, step, window) point, plus
/// the same metrics per forecast step.
struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    double acc = 0.0;
    /// Ocean cells per frame that entered the evaluation.
    std::size_t cell_count = 0;
    /// Total pooled points.
    std::size_t points = 0;
    std::vector<double> step_mse, step_mae, step_acc;

    nlohmann::json to_json() const;
};

/// Which ocean cells to score.
struct EvalSelection {
    std::optional<RegionBox> region;
    /// Optional H*W filter (1 = keep), e.g. coastal cells.
    std::vector<std::uint8_t> cells;
};

/// Collects de-normalized prediction/truth pairs and reports pooled metrics.
class MetricAccumulator {
public:
    MetricAccumulator(GridPtr grid, Normalization norm, const EvalSelection& sel = {});

    /// Adds one forecast (q frames) and its truth; both standardized.
    void add(const Trajectory& pred, const Trajectory& truth);
    void add(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& truth);
    MetricReport report() const;
    std::size_t cell_count() const noexcept { return cells_.size(); }

private:
    GridPtr grid_;
    Normalization norm_;
    std::vector<std::size_t> cells_;
    std::vector<std::vector<double>> pred_, truth_;  // per step, pooled over windows
};

MetricReport evaluate(const Trajectory& pred, const Trajectory& truth, const Normalization& norm,
                      const EvalSelection& sel = {});

/// Pearson correlation of two equal-length samples, two-pass.
double pooled_acc(const std::vector<double>& pred, const std::vector<double>& truth);

// Differentiable forms over ocean cells of [.., H, W] tensors.
ad::Var mse_loss(const ad::Var& pred, const ad::Var& truth, const GridSpec& g);
ad::Var acc_metric(const ad::Var& pred, const ad::Var& truth, const GridSpec& g);

/// One row of an ablation table.
struct AblationRow {
    std::string variant;
    MetricReport report;
    /// Extra columns (e.g. coastal/open MSE ratio).
    nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
/// Aligned text table; MSE is shown multiplied by mse_display_scale.
std::string ablation_text(const std::vector<AblationRow>& rows, double mse_display_scale = 1000.0);

} // namespace sstode
