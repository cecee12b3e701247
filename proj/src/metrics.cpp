#include "sstode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sstode/errors.hpp"

namespace sstode {

using nlohmann::json;

json MetricReport::to_json() const {
    return {{"mse", mse},           {"mae", mae},           {"acc", acc},          {"cell_count", cell_count},
            {"points", points},     {"step_mse", step_mse}, {"step_mae", step_mae}, {"step_acc", step_acc}};
}

double pooled_acc(const std::vector<double>& pred, const std::vector<double>& truth) {
    require(pred.size() == truth.size(), ErrorCode::ShapeMismatch, "pooled_acc: sample sizes differ");
    require(!pred.empty(), ErrorCode::EmptyEvaluation, "pooled_acc: no samples");
    const auto n = static_cast<double>(pred.size());
    double mp = 0, mt = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mp += pred[i];
        mt += truth[i];
    }
    mp /= n;
    mt /= n;
    double num = 0, sp = 0, st = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double a = pred[i] - mp, b = truth[i] - mt;
        num += a * b;
        sp += a * a;
        st += b * b;
    }
    const double den = std::sqrt(sp) * std::sqrt(st);
    // Degenerate (constant) samples: identical -> 1, otherwise uncorrelated.
    if (den == 0.0) return sp == st ? 1.0 : 0.0;
    return std::clamp(num / den, -1.0, 1.0);
}

MetricAccumulator::MetricAccumulator(GridPtr grid, Normalization norm, const EvalSelection& sel)
    : grid_(std::move(grid)), norm_(norm) {
    const GridSpec& g = *grid_;
    require(sel.cells.empty() || sel.cells.size() == g.cells(), ErrorCode::ShapeMismatch,
            "evaluation cell filter does not match grid");
    std::vector<std::uint8_t> keep(g.cells(), 1);
    if (sel.region) {
        std::fill(keep.begin(), keep.end(), 0);
        const RegionIndices idx = region_indices(g, *sel.region);
        for (std::size_t r : idx.rows)
            for (std::size_t c : idx.cols) keep[g.index(r, c)] = 1;
    }
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (keep[i] && g.ocean(i) && (sel.cells.empty() || sel.cells[i])) cells_.push_back(i);
    require(!cells_.empty(), ErrorCode::EmptyEvaluation, "evaluation selects no ocean cells");
}

void MetricAccumulator::add(const std::vector<std::vector<double>>& pred,
                            const std::vector<std::vector<double>>& truth) {
    require(pred.size() == truth.size(), ErrorCode::ShapeMismatch,
            "evaluate: prediction has " + std::to_string(pred.size()) + " steps, truth " + std::to_string(truth.size()));
    if (pred_.size() < pred.size()) {
        pred_.resize(pred.size());
        truth_.resize(pred.size());
    }
    for (std::size_t k = 0; k < pred.size(); ++k) {
        require(pred[k].size() == grid_->cells() && truth[k].size() == grid_->cells(), ErrorCode::ShapeMismatch,
                "evaluate: frame does not match grid");
        for (std::size_t i : cells_) {
            pred_[k].push_back(norm_.invert(pred[k][i]));
            truth_[k].push_back(norm_.invert(truth[k][i]));
        }
    }
}

void MetricAccumulator::add(const Trajectory& pred, const Trajectory& truth) {
    require(pred.grid && truth.grid && compatible(*pred.grid, *grid_) && compatible(*truth.grid, *grid_),
            ErrorCode::ShapeMismatch, "evaluate: trajectories are on a different grid");
    add(pred.frames, truth.frames);
}

MetricReport MetricAccumulator::report() const {
    MetricReport r;
    r.cell_count = cells_.size();
    std::vector<double> all_p, all_t;
    for (std::size_t k = 0; k < pred_.size(); ++k) {
        double se = 0, ae = 0;
        for (std::size_t i = 0; i < pred_[k].size(); ++i) {
            const double d = pred_[k][i] - truth_[k][i];
            se += d * d;
            ae += std::abs(d);
        }
        const auto n = static_cast<double>(pred_[k].size());
        r.step_mse.push_back(se / n);
        r.step_mae.push_back(ae / n);
        r.step_acc.push_back(pooled_acc(pred_[k], truth_[k]));
        all_p.insert(all_p.end(), pred_[k].begin(), pred_[k].end());
        all_t.insert(all_t.end(), truth_[k].begin(), truth_[k].end());
    }
    require(!all_p.empty(), ErrorCode::EmptyEvaluation, "evaluate: nothing was added");
    double se = 0, ae = 0;
    for (std::size_t i = 0; i < all_p.size(); ++i) {
        const double d = all_p[i] - all_t[i];
        se += d * d;
        ae += std::abs(d);
    }
    r.points = all_p.size();
    r.mse = se / static_cast<double>(r.points);
    r.mae = ae / static_cast<double>(r.points);
    r.acc = pooled_acc(all_p, all_t);
    return r;
}

MetricReport evaluate(const Trajectory& pred, const Trajectory& truth, const Normalization& norm,
                      const EvalSelection& sel) {
    require(pred.grid != nullptr, ErrorCode::ShapeMismatch, "evaluate: prediction has no grid");
    MetricAccumulator acc(pred.grid, norm, sel);
    acc.add(pred, truth);
    return acc.report();
}

ad::Var mse_loss(const ad::Var& pred, const ad::Var& truth, const GridSpec& g) {
    return ad::masked_mean(ad::square(pred - truth), g);
}

ad::Var acc_metric(const ad::Var& pred, const ad::Var& truth, const GridSpec& g) {
    const ad::Var a = ad::apply_mask(ad::add_scalar(pred, ad::neg(ad::masked_mean(pred, g))), g);
    const ad::Var b = ad::apply_mask(ad::add_scalar(truth, ad::neg(ad::masked_mean(truth, g))), g);
    return ad::div(ad::sum(a * b), ad::sqrt(ad::sum(ad::square(a)) * ad::sum(ad::square(b))));
}

json ablation_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json j = r.report.to_json();
        j["variant"] = r.variant;
        j["extra"] = r.extra;
        out.push_back(std::move(j));
    }
    return out;
}

std::string ablation_text(const std::vector<AblationRow>& rows, double mse_display_scale) {
    std::size_t w = 7;
    for (const auto& r : rows) w = std::max(w, r.variant.size());
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s  %12s  %10s  %8s\n", static_cast<int>(w), "Variant",
                  ("MSE x" + std::to_string(static_cast<long long>(mse_display_scale))).c_str(), "MAE", "ACC");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %12.4f  %10.4f  %8.4f\n", static_cast<int>(w), r.variant.c_str(),
                      r.report.mse * mse_display_scale, r.report.mae, r.report.acc);
        os << buf;
    }
    return os.str();
}

} // namespace sstode
