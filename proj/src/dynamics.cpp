#include "sstode/dynamics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "sstode/errors.hpp"

namespace sstode {

namespace {

constexpr double kTimeTol = 1e-9;

std::size_t steps_between(double from, double to, double step) {
    const double n = (to - from) / step;
    const double r = std::round(n);
    require(r >= 0 && std::abs(n - r) <= kTimeTol * std::max(1.0, r), ErrorCode::InvalidArgument,
            "time " + std::to_string(to) + " is not on the solver grid (step " + std::to_string(step) + ")");
    return static_cast<std::size_t>(r);
}

void check_state(const Tensor& sst, const Tensor* vel, double max_norm, double t) {
    auto worst = [](const Tensor& x) -> double {
        double m = 0;
        for (double v : x.vec()) {
            if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
            m = std::max(m, std::abs(v));
        }
        return m;
    };
    const double ms = worst(sst), mv = vel ? worst(*vel) : 0.0;
    if (ms > max_norm || mv > max_norm) {
        std::ostringstream os;
        os << "state left the admissible range at t=" << t << " h (max|Y|=" << ms << ", max|V|=" << mv
           << ", limit " << max_norm << "); check the explicit stability bound";
        throw Error(ErrorCode::NumericalBlowup, os.str());
    }
}

} // namespace

const char* to_string(Diffusivity d) {
    switch (d) {
        case Diffusivity::none: return "none";
        case Diffusivity::fixed: return "fixed";
        case Diffusivity::scalar: return "scalar";
        case Diffusivity::map: return "map";
    }
    return "?";
}

Diffusivity parse_diffusivity(const std::string& s) {
    if (s == "none") return Diffusivity::none;
    if (s == "fixed") return Diffusivity::fixed;
    if (s == "scalar") return Diffusivity::scalar;
    if (s == "map") return Diffusivity::map;
    throw Error(ErrorCode::InvalidArgument, "unknown diffusivity variant '" + s + "' (none|fixed|scalar|map)");
}

ScalarField sst_rhs(const OdeState& state, double kappa) {
    require(kappa >= 0, ErrorCode::NonPositiveKappa, "sst_rhs: kappa must be >= 0");
    ScalarField out = advection_term(state.sst, state.velocity);
    if (kappa > 0) {
        const ScalarField d = diffusion_term(state.sst, kappa);
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += d.values[i];
    }
    return out;
}

VectorField velocity_rhs(const OdeState& state, const nn::VelocityNet& net, ad::ParamSet& params, const Tensor& embed) {
    const GridSpec& g = *state.sst.grid;
    require(state.velocity.grid && compatible(g, *state.velocity.grid), ErrorCode::ShapeMismatch,
            "velocity_rhs: state fields live on different grids");
    require(embed.shape() == Shape{embedding_layout::channels, g.height(), g.width()}, ErrorCode::ShapeMismatch,
            "velocity_rhs: embedding must be [36,H,W], got " + shape_string(embed.shape()));
    const std::size_t n = g.cells();
    Tensor vel({2, g.height(), g.width()});
    std::copy(state.velocity.u.begin(), state.velocity.u.end(), vel.vec().begin());
    std::copy(state.velocity.v.begin(), state.velocity.v.end(), vel.vec().begin() + static_cast<std::ptrdiff_t>(n));
    ad::Tape tape;
    const ad::Var y = tape.constant(Tensor({1, g.height(), g.width()}, state.sst.values));
    const ad::Var grad = ad::concat({ad::grad_x(y, g), ad::grad_y(y, g)});
    const Tensor out = net.forward(tape, params, g, tape.constant(std::move(vel)), y, grad, tape.constant(embed)).value();
    VectorField res(state.sst.grid);
    std::copy(out.vec().begin(), out.vec().begin() + static_cast<std::ptrdiff_t>(n), res.u.begin());
    std::copy(out.vec().begin() + static_cast<std::ptrdiff_t>(n), out.vec().end(), res.v.begin());
    return res;
}

bool stability_bound(double kappa, double dx, double dy, double step) {
    if (kappa <= 0) return true;
    return step <= 1.0 / (2.0 * kappa * (1.0 / (dx * dx) + 1.0 / (dy * dy)));
}

std::vector<double> output_schedule(double t0, double horizon, double every) {
    require(horizon > 0, ErrorCode::InvalidArgument, "horizon must be positive");
    require(every > 0, ErrorCode::InvalidArgument, "output cadence must be positive");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor(horizon / every + kTimeTol));
    for (std::size_t k = 1; k <= n; ++k) out.push_back(t0 + static_cast<double>(k) * every);
    if (out.empty() || std::abs(out.back() - (t0 + horizon)) > kTimeTol * std::max(1.0, horizon))
        out.push_back(t0 + horizon);
    return out;
}

OdeSystem::OdeSystem(GridPtr grid, const nn::VelocityNet* net, const EmbeddingBuilder* embed)
    : grid_(std::move(grid)), net_(net), embed_(embed) {
    require(grid_ != nullptr, ErrorCode::InvalidArgument, "OdeSystem needs a grid");
    require(net_ == nullptr || embed_ != nullptr, ErrorCode::InvalidArgument,
            "OdeSystem: a velocity network needs an embedding builder");
}

OdeSystem::Rhs OdeSystem::rhs(ad::Tape& tape, ad::ParamSet& params, const ad::Var& sst, const ad::Var& velocity,
                              const ad::Var& kappa, double t) const {
    const GridSpec& g = *grid_;
    Rhs out;
    const ad::Var gx = ad::grad_x(sst, g), gy = ad::grad_y(sst, g);
    out.advection = -(ad::slice_channels(velocity, 0, 1) * gx + ad::slice_channels(velocity, 1, 2) * gy);
    out.sst = out.advection;
    if (kappa.valid()) {
        const ad::Var lap = ad::laplacian(sst, g);
        out.diffusion = kappa.value().size() == 1 ? ad::mul_scalar(lap, kappa) : ad::mul_plane(lap, kappa);
        out.sst = out.sst + out.diffusion;
    }
    if (net_) {
        out.velocity = net_->forward(tape, params, g, velocity, sst, ad::concat({gx, gy}),
                                     tape.constant(embed_->build(t)));
    }
    return out;
}

OdeSystem::Rollout OdeSystem::unroll(ad::Tape& tape, ad::ParamSet& params, const ad::Var& sst0,
                                     const ad::Var& velocity0, const ad::Var& kappa, double t0,
                                     const std::vector<double>& output_times, const IntegrateConfig& cfg) const {
    require(cfg.step > 0, ErrorCode::InvalidArgument, "solver step must be positive");
    const GridSpec& g = *grid_;
    require(sst0.shape() == Shape{1, g.height(), g.width()} && velocity0.shape() == Shape{2, g.height(), g.width()},
            ErrorCode::ShapeMismatch, "unroll: state must be [1,H,W] and [2,H,W]");
    Rollout out;
    if (output_times.empty()) return out;
    std::vector<std::size_t> marks;
    double prev = t0;
    for (double t : output_times) {
        require(t > prev, ErrorCode::InvalidArgument, "output times must be increasing and after t0");
        marks.push_back(steps_between(t0, t, cfg.step));
        prev = t;
    }

    ad::Var y = sst0, v = velocity0;
    auto keep = [&](std::size_t n) {
        out.step_times.push_back(t0 + static_cast<double>(n) * cfg.step);
        out.step_sst.push_back(y);
        out.step_velocity.push_back(v);
    };
    if (cfg.keep_steps) keep(0);
    std::size_t next = 0;
    const double h = cfg.step;
    for (std::size_t n = 0; next < marks.size(); ++n) {
        const double t = t0 + static_cast<double>(n) * h;
        if (cfg.solver == Solver::euler) {
            const Rhs k1 = rhs(tape, params, y, v, kappa, t);
            y = y + ad::scale(k1.sst, h);
            if (k1.velocity.valid()) v = v + ad::scale(k1.velocity, h);
        } else {
            const Rhs k1 = rhs(tape, params, y, v, kappa, t);
            auto shift = [&](const ad::Var& base, const ad::Var& d, double c) {
                return d.valid() ? base + ad::scale(d, c) : base;
            };
            const Rhs k2 = rhs(tape, params, shift(y, k1.sst, h / 2), shift(v, k1.velocity, h / 2), kappa, t + h / 2);
            const Rhs k3 = rhs(tape, params, shift(y, k2.sst, h / 2), shift(v, k2.velocity, h / 2), kappa, t + h / 2);
            const Rhs k4 = rhs(tape, params, shift(y, k3.sst, h), shift(v, k3.velocity, h), kappa, t + h);
            y = y + ad::scale(k1.sst + 2.0 * k2.sst + 2.0 * k3.sst + k4.sst, h / 6);
            if (k1.velocity.valid())
                v = v + ad::scale(k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity, h / 6);
        }
        check_state(y.value(), &v.value(), cfg.max_norm, t + h);
        if (cfg.keep_steps) keep(n + 1);
        while (next < marks.size() && marks[next] == n + 1) {
            out.times.push_back(output_times[next]);
            out.sst.push_back(y);
            out.velocity.push_back(v);
            ++next;
        }
    }
    return out;
}

IntegrationResult integrate(const OdeState& initial, double horizon, const IntegrateConfig& cfg, const Dynamics& dyn) {
    require(initial.sst.grid != nullptr, ErrorCode::InvalidArgument, "integrate: state has no grid");
    const GridPtr grid = initial.sst.grid;
    const GridSpec& g = *grid;
    require(initial.velocity.grid && compatible(g, *initial.velocity.grid), ErrorCode::ShapeMismatch,
            "integrate: state fields live on different grids");
    require(cfg.step > 0 && cfg.output_every > 0, ErrorCode::InvalidArgument, "integrate: step and cadence must be > 0");
    (void)steps_between(0.0, cfg.output_every, cfg.step);
    const std::vector<double> times = output_schedule(initial.t, horizon, cfg.output_every);
    require(dyn.net == nullptr || (dyn.params && dyn.embed), ErrorCode::InvalidArgument,
            "integrate: a velocity network needs parameters and an embedding");

    IntegrationResult res;
    double kmax = dyn.kappa;
    if (!dyn.kappa_map.empty()) {
        require(dyn.kappa_map.size() == g.cells(), ErrorCode::ShapeMismatch, "integrate: kappa map does not match grid");
        kmax = 0;
        for (double k : dyn.kappa_map) {
            require(k >= 0, ErrorCode::NonPositiveKappa, "integrate: kappa map has negative entries");
            kmax = std::max(kmax, k);
        }
    }
    require(kmax >= 0, ErrorCode::NonPositiveKappa, "integrate: kappa must be >= 0");
    double dx_min = g.dx();
    for (std::size_t r = 0; r < g.height(); ++r) dx_min = std::min(dx_min, g.dx_at(r));
    if (!stability_bound(kmax, dx_min, g.dy(), cfg.step)) {
        std::ostringstream os;
        os << "step " << cfg.step << " h exceeds the explicit diffusion bound for kappa=" << kmax;
        res.warnings.push_back(os.str());
    }

    ad::ParamSet scratch;
    ad::ParamSet& params = dyn.params ? *dyn.params : scratch;
    const OdeSystem sys(grid, dyn.net, dyn.embed);
    const std::size_t n = g.cells();
    const Shape plane{1, g.height(), g.width()};

    Tensor y(plane, initial.sst.values);
    Tensor v({2, g.height(), g.width()});
    std::copy(initial.velocity.u.begin(), initial.velocity.u.end(), v.vec().begin());
    std::copy(initial.velocity.v.begin(), initial.velocity.v.end(), v.vec().begin() + static_cast<std::ptrdiff_t>(n));

    auto to_state = [&](const Tensor& ys, const Tensor& vs, double t) {
        OdeState s;
        s.sst = ScalarField(grid, ys.vec());
        s.velocity = VectorField(grid);
        std::copy(vs.vec().begin(), vs.vec().begin() + static_cast<std::ptrdiff_t>(n), s.velocity.u.begin());
        std::copy(vs.vec().begin() + static_cast<std::ptrdiff_t>(n), vs.vec().end(), s.velocity.v.begin());
        s.t = t;
        return s;
    };

    // One tape per internal step keeps memory flat; the arithmetic is the
    // same graph the differentiable rollout records.
    IntegrateConfig one = cfg;
    one.keep_steps = false;
    if (cfg.keep_steps) res.steps.push_back(to_state(y, v, initial.t));
    double t = initial.t;
    for (double target : times) {
        const std::size_t steps = steps_between(t, target, cfg.step);
        for (std::size_t s = 0; s < steps; ++s) {
            ad::Tape tape;
            ad::Var kappa;
            if (!dyn.kappa_map.empty())
                kappa = tape.constant(Tensor({g.height(), g.width()}, dyn.kappa_map));
            else if (dyn.kappa > 0)
                kappa = tape.constant(Tensor::scalar(dyn.kappa));
            const auto r = sys.unroll(tape, params, tape.constant(y), tape.constant(v), kappa, t, {t + cfg.step}, one);
            y = r.sst.front().value();
            v = r.velocity.front().value();
            t = target - static_cast<double>(steps - s - 1) * cfg.step;
            if (cfg.keep_steps) res.steps.push_back(to_state(y, v, t));
        }
        t = target;
        res.outputs.push_back(to_state(y, v, t));
    }
    return res;
}

} // namespace sstode
