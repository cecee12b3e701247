#pragma once

#include <string>
#include <vector>

#include "sstode/autodiff.hpp"
#include "sstode/embedding.hpp"
#include "sstode/grid.hpp"
#include "sstode/nn.hpp"

namespace sstode {

/// How the diffusion term is parameterized.
enum class Diffusivity {
    none,    ///< no diffusion term
    fixed,   ///< kappa = 1
    scalar,  ///< one learnable kappa
    map,     ///< learnable kappa per cell
};

const char* to_string(Diffusivity d);
Diffusivity parse_diffusivity(const std::string& s);

enum class Solver { euler, rk4 };

struct OdeState {
    ScalarField sst;
    VectorField velocity;
    double t = 0.0;  // hours
};

/// -V . grad Y + kappa * lap Y. kappa = 0 drops the diffusion term.
ScalarField sst_rhs(const OdeState& state, double kappa);
/// f_v(V, Y, grad Y, phi) evaluated by the network; land cells 0.
VectorField velocity_rhs(const OdeState& state, const nn::VelocityNet& net, ad::ParamSet& params, const Tensor& embed);

/// True iff step <= 1 / (2 kappa (1/dx^2 + 1/dy^2)), the explicit-diffusion limit.
bool stability_bound(double kappa, double dx, double dy, double step);

struct IntegrateConfig {
    double step = 1.0;          // hours
    double output_every = 6.0;  // hours; must be a multiple of step
    double max_norm = 1e6;
    Solver solver = Solver::euler;
    /// Also return the state after every internal step (including the initial one).
    bool keep_steps = false;
};

/// Coupled SST / velocity right-hand side on a tape.
///
/// `kappa` is either invalid (no diffusion), a one-element tensor or an [H,W]
/// map, already positive. Without a network the velocity is held fixed.
class OdeSystem {
public:
    OdeSystem(GridPtr grid, const nn::VelocityNet* net = nullptr, const EmbeddingBuilder* embed = nullptr);

    struct Rhs {
        ad::Var sst;         // [1,H,W]
        ad::Var velocity;    // [2,H,W]; invalid when there is no network
        ad::Var advection;   // [1,H,W]
        ad::Var diffusion;   // [1,H,W]; invalid when kappa is invalid
    };
    Rhs rhs(ad::Tape& tape, ad::ParamSet& params, const ad::Var& sst, const ad::Var& velocity, const ad::Var& kappa,
            double t) const;

    struct Rollout {
        std::vector<double> times;
        std::vector<ad::Var> sst;       // one per output time
        std::vector<ad::Var> velocity;  // one per output time
        std::vector<double> step_times;
        std::vector<ad::Var> step_sst;  // filled when keep_steps
        std::vector<ad::Var> step_velocity;
    };
    /// Unrolls the solver from t0 to each requested output time (sorted, > t0,
    /// each a multiple of cfg.step past t0).
    Rollout unroll(ad::Tape& tape, ad::ParamSet& params, const ad::Var& sst0, const ad::Var& velocity0,
                   const ad::Var& kappa, double t0, const std::vector<double>& output_times,
                   const IntegrateConfig& cfg) const;

    const GridPtr& grid() const noexcept { return grid_; }

private:
    GridPtr grid_;
    const nn::VelocityNet* net_;
    const EmbeddingBuilder* embed_;
};

/// Parameters of a value-level integration.
struct Dynamics {
    /// Scalar diffusivity; 0 disables diffusion. Ignored when kappa_map is set.
    double kappa = 0.0;
    std::vector<double> kappa_map;
    const nn::VelocityNet* net = nullptr;
    ad::ParamSet* params = nullptr;
    const EmbeddingBuilder* embed = nullptr;
};

struct IntegrationResult {
    std::vector<OdeState> outputs;  // at t0 + k * output_every, and at the horizon
    std::vector<OdeState> steps;    // every internal step when keep_steps
    std::vector<std::string> warnings;
};

IntegrationResult integrate(const OdeState& initial, double horizon, const IntegrateConfig& cfg, const Dynamics& dyn);

/// Output times t0 + k * every for k >= 1 up to t0 + horizon (horizon appended if not on the cadence).
std::vector<double> output_schedule(double t0, double horizon, double every);

} // namespace sstode
