#pragma once

#include <vector>

#include "sstode/autodiff.hpp"
#include "sstode/grid.hpp"

namespace sstode {

/// Settings of the variational initial-velocity estimation.
struct VelocityInitConfig {
    double lr = 2.0;
    std::size_t epochs = 200;
    /// Weight of the l2 penalty on V.
    double alpha = 1e-7;
    /// Adds the RBF smoothness penalty rbf_weight * |V - K-smooth(V)|^2.
    bool rbf = false;
    /// Kernel bandwidth in grid cells.
    double rbf_bandwidth = 8.0;
    double rbf_weight = 1.0;
    /// Diffusivity the optimization starts from.
    double kappa_init = 0.1;
    /// Adam learning rate of kappa's pre-activation (lr drives V only).
    double kappa_lr = 0.3;
    /// Anneals both learning rates to zero over the epoch budget (cosine).
    bool cosine = true;
    /// Fraction of the budget spent on a linear learning-rate warmup (with cosine).
    double warmup_fraction = 0.2;
};

/// Gaussian (RBF) covariance over grid-cell coordinates, distances measured in cells.
struct RbfPrior {
    double bandwidth = 2.0;

    double kernel(double row_i, double col_i, double row_j, double col_j) const;
    /// K_ij for a list of cells of g, row-major [n, n].
    std::vector<double> kernel_matrix(const GridSpec& g, const std::vector<std::size_t>& cells) const;
};

struct VelocityEstimate {
    VectorField velocity;  // cells / hour
    double kappa_raw = 0.0;
    double final_loss = 0.0;
    std::size_t epochs_run = 0;
    /// Objective value before each update (epochs_run entries).
    std::vector<double> loss_history;

    double kappa() const;
};

/// R = dY/dt + V . grad Y - kappa * lap Y; land cells 0.
ScalarField residual(const ScalarField& sst, const ScalarField& tendency, const VectorField& velocity, double kappa);

/// Differentiable residual. sst, tendency: [H,W] or [1,H,W]; velocity: [2,H,W];
/// kappa: one element (already positive). Returns the residual shaped like sst.
ad::Var residual(const ad::Var& sst, const ad::Var& tendency, const ad::Var& velocity, const ad::Var& kappa,
                 const GridSpec& g);

/// Mean over ocean cells of R^2 + alpha |V|^2 (+ the optional RBF penalty),
/// with kappa = softplus(kappa_raw).
ad::Var velocity_objective(const ad::Var& sst, const ad::Var& tendency, const ad::Var& velocity,
                           const ad::Var& kappa_raw, const GridSpec& g, const VelocityInitConfig& cfg);

/// Fits a spline through the history, takes dY/dt at its last knot and
/// minimizes the objective over (V, kappa_raw) with Adam from V = 0.
VelocityEstimate estimate_initial_velocity(const Trajectory& history, const VelocityInitConfig& cfg = {});

} // namespace sstode
