#include "sstode/velocity_init.hpp"

#include <cmath>

#include "sstode/errors.hpp"
#include "sstode/optim.hpp"
#include "sstode/spline.hpp"

namespace sstode {

double RbfPrior::kernel(double row_i, double col_i, double row_j, double col_j) const {
    require(bandwidth > 0, ErrorCode::InvalidArgument, "RBF bandwidth must be positive");
    const double dr = row_i - row_j, dc = col_i - col_j;
    return std::exp(-(dr * dr + dc * dc) / (2.0 * bandwidth * bandwidth));
}

std::vector<double> RbfPrior::kernel_matrix(const GridSpec& g, const std::vector<std::size_t>& cells) const {
    const std::size_t n = cells.size();
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const auto ri = static_cast<double>(cells[i] / g.width()), ci = static_cast<double>(cells[i] % g.width());
            const auto rj = static_cast<double>(cells[j] / g.width()), cj = static_cast<double>(cells[j] % g.width());
            k[i * n + j] = kernel(ri, ci, rj, cj);
        }
    return k;
}

double VelocityEstimate::kappa() const { return softplus_pos(kappa_raw); }

ScalarField residual(const ScalarField& sst, const ScalarField& tendency, const VectorField& velocity, double kappa) {
    require(sst.grid && tendency.grid && velocity.grid && compatible(*sst.grid, *tendency.grid) &&
                compatible(*sst.grid, *velocity.grid),
            ErrorCode::ShapeMismatch, "residual: fields live on different grids");
    require(tendency.values.size() == sst.values.size() && velocity.u.size() == sst.values.size() &&
                velocity.v.size() == sst.values.size(),
            ErrorCode::ShapeMismatch, "residual: field sizes differ");
    const auto& g = *sst.grid;
    auto [gx, gy] = gradient(sst);
    const ScalarField lap = laplacian(sst);
    ScalarField r(sst.grid);
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (g.ocean(i))
            r.values[i] = tendency.values[i] + velocity.u[i] * gx.values[i] + velocity.v[i] * gy.values[i] -
                          kappa * lap.values[i];
    return r;
}

ad::Var residual(const ad::Var& sst, const ad::Var& tendency, const ad::Var& velocity, const ad::Var& kappa,
                 const GridSpec& g) {
    const Shape plane{1, g.height(), g.width()};
    require(sst.value().size() == g.cells() && tendency.value().size() == g.cells(), ErrorCode::ShapeMismatch,
            "residual: sst/tendency do not match the grid");
    require(velocity.shape() == Shape{2, g.height(), g.width()}, ErrorCode::ShapeMismatch,
            "residual: velocity must be [2,H,W], got " + shape_string(velocity.shape()));
    const ad::Var y = ad::reshape(sst, plane);
    const ad::Var u = ad::slice_channels(velocity, 0, 1);
    const ad::Var v = ad::slice_channels(velocity, 1, 2);
    ad::Var r = ad::reshape(tendency, plane) + u * ad::grad_x(y, g) + v * ad::grad_y(y, g) -
                ad::mul_scalar(ad::laplacian(y, g), kappa);
    return ad::reshape(ad::apply_mask(r, g), sst.shape());
}

ad::Var velocity_objective(const ad::Var& sst, const ad::Var& tendency, const ad::Var& velocity,
                           const ad::Var& kappa_raw, const GridSpec& g, const VelocityInitConfig& cfg) {
    const ad::Var r = residual(sst, tendency, velocity, ad::softplus(kappa_raw), g);
    // |V|^2 per cell: both channels summed, then averaged over ocean cells.
    ad::Var loss = ad::masked_mean(ad::square(r), g) + ad::scale(ad::masked_mean(ad::square(velocity), g), 2.0 * cfg.alpha);
    if (cfg.rbf) {
        const ad::Var rough = velocity - ad::gaussian_smooth(velocity, g, cfg.rbf_bandwidth);
        loss = loss + ad::scale(ad::masked_mean(ad::square(ad::apply_mask(rough, g)), g), 2.0 * cfg.rbf_weight);
    }
    return loss;
}

VelocityEstimate estimate_initial_velocity(const Trajectory& history, const VelocityInitConfig& cfg) {
    require(cfg.kappa_init > 0, ErrorCode::InvalidArgument, "kappa_init must be positive");
    require(cfg.lr > 0 && cfg.kappa_lr >= 0, ErrorCode::InvalidArgument, "learning rates must be positive");
    const SplineFit fit = fit_spline(history);
    const GridPtr& grid = history.grid;
    const GridSpec& g = *grid;
    const Shape plane{1, g.height(), g.width()};
    const Tensor sst(plane, history.frames.back());
    const Tensor tendency(plane, derivative_at(fit, history.times.back()).values);

    // V and kappa_raw live in separate sets so each gets its own Adam step size.
    ad::ParamSet params, kparams;
    params.add("velocity", Tensor({2, g.height(), g.width()}, 0.0));
    kparams.add("kappa_raw", Tensor::scalar(softplus_inverse(cfg.kappa_init)));
    ad::AdamState adam, kadam;
    adam.lr = cfg.lr;
    kadam.lr = cfg.kappa_lr;
    if (cfg.cosine) {
        adam.schedule = ad::CosineSchedule{std::max<std::size_t>(cfg.epochs, 1), 0.0,
                                           static_cast<std::size_t>(cfg.warmup_fraction * static_cast<double>(cfg.epochs))};
        kadam.schedule = adam.schedule;
    }

    auto evaluate = [&](bool with_grad) {
        ad::Tape tape;
        ad::Var loss = velocity_objective(tape.constant(sst), tape.constant(tendency), tape.param(params, "velocity"),
                                          tape.param(kparams, "kappa_raw"), g, cfg);
        const double value = loss.item();
        if (!std::isfinite(value))
            throw Error(ErrorCode::DivergedLoss, "velocity estimation diverged at epoch " +
                                                     std::to_string(adam.steps) + " (lr=" + std::to_string(cfg.lr) +
                                                     ", kappa_raw=" + std::to_string(kparams.at("kappa_raw").value[0]) +
                                                     ")");
        if (with_grad) {
            params.zero_grads();
            kparams.zero_grads();
            tape.backward(loss);
        }
        return value;
    };

    VelocityEstimate est;
    est.loss_history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        est.loss_history.push_back(evaluate(true));
        ad::adam_step(params, adam);
        ad::adam_step(kparams, kadam);
    }
    est.final_loss = evaluate(false);
    est.epochs_run = cfg.epochs;
    est.kappa_raw = kparams.at("kappa_raw").value[0];
    est.velocity = VectorField(grid);
    const auto& vel = params.at("velocity").value;
    const std::size_t n = g.cells();
    std::copy(vel.vec().begin(), vel.vec().begin() + static_cast<std::ptrdiff_t>(n), est.velocity.u.begin());
    std::copy(vel.vec().begin() + static_cast<std::ptrdiff_t>(n), vel.vec().end(), est.velocity.v.begin());
    return est;
}

} // namespace sstode
