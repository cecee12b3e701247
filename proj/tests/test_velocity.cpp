#include <doctest.h>

#include <cmath>
#include <random>

#include "sstode/data.hpp"
#include "sstode/errors.hpp"
#include "sstode/optim.hpp"
#include "sstode/velocity_init.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;

namespace {

Trajectory history_of(const Dataset& ds, std::size_t n = 3) {
    Trajectory h;
    h.grid = ds.grid;
    for (std::size_t k = 0; k < n; ++k) h.push(ds.sst().times[k], ds.sst().frames[k]);
    return h;
}

double mean_speed(const VectorField& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.u.size(); ++i) s += std::hypot(v.u[i], v.v[i]);
    return s / static_cast<double>(v.u.size());
}

double sq_norm(const VectorField& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.u.size(); ++i) s += v.u[i] * v.u[i] + v.v[i] * v.v[i];
    return s;
}

} // namespace

TEST_CASE("residual vanishes on consistent inputs") {
    const auto g = periodic_grid(12, 16);
    for (double v : residual(ScalarField(g, 2.0), ScalarField(g), VectorField(g), 0.7).values) CHECK(v == 0.0);

    const auto y = fourier_mode(g, 2, 1);
    const auto [gx, gy] = gradient(y);
    ScalarField adv_tend(g);
    for (std::size_t i = 0; i < g->cells(); ++i) adv_tend.values[i] = -0.4 * gx.values[i];
    for (double v : residual(y, adv_tend, VectorField(g, 0.4, 0.0), 0.0).values) CHECK(std::abs(v) < 1e-15);

    const auto diff_tend = diffusion_term(y, 0.25);
    for (double v : residual(y, diff_tend, VectorField(g), 0.25).values) CHECK(v == 0.0);
}

TEST_CASE("rbf kernel is symmetric with unit diagonal") {
    const auto g = island_grid(5, 6, 1, 3, 1, 3);
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < g->cells(); ++i)
        if (g->ocean(i)) cells.push_back(i);
    const RbfPrior prior{1.5};
    const auto k = prior.kernel_matrix(*g, cells);
    const std::size_t n = cells.size();
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(k[i * n + i] == 1.0);
        for (std::size_t j = 0; j < n; ++j) CHECK(k[i * n + j] == k[j * n + i]);
    }
    CHECK(prior.kernel(0, 0, 0, 1.5) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("zero signal leaves the velocity at zero") {
    const auto g = island_grid(8, 8, 2, 4, 2, 4);
    Trajectory h;
    h.grid = g;
    for (double t : {0.0, 6.0, 12.0}) h.push(t, ScalarField(g, 0.0).values);
    VelocityInitConfig cfg;
    cfg.epochs = 50;
    const auto est = estimate_initial_velocity(h, cfg);
    CHECK(std::sqrt(sq_norm(est.velocity)) <= 1e-6);
    CHECK(est.kappa() > 0.0);
    CHECK(est.epochs_run == 50);
}

TEST_CASE("too few snapshots") {
    const auto g = periodic_grid(4, 4);
    Trajectory h;
    h.grid = g;
    h.push(0.0, ScalarField(g).values);
    h.push(6.0, ScalarField(g).values);
    try {
        estimate_initial_velocity(h);
        FAIL("expected TooFewKnots");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewKnots);
    }
}

TEST_CASE("estimation: diffusion recovery, trend of the loss, determinism") {
    SyntheticParams p;
    p.kind = SyntheticKind::diffusion;
    p.kappa = 0.2;
    p.length = 3;
    p.max_wavenumber = 3;
    const Dataset ds = gen_synthetic(p, 4);
    VelocityInitConfig cfg;
    cfg.rbf = true;
    const auto est = estimate_initial_velocity(history_of(ds), cfg);
    CHECK(est.kappa() == doctest::Approx(0.2).epsilon(0.15));
    CHECK(mean_speed(est.velocity) < 0.05);
    CHECK(softplus_pos(est.kappa_raw) > 0.0);
    REQUIRE(est.loss_history.size() == cfg.epochs);
    CHECK(std::isfinite(est.final_loss));
    const auto& lh = est.loss_history;
    for (std::size_t k = lh.size() - 9; k < lh.size(); ++k) CHECK(lh[k] <= lh[k - 1] + 1e-6);

    const auto again = estimate_initial_velocity(history_of(ds), cfg);
    CHECK(again.velocity.u == est.velocity.u);
    CHECK(again.velocity.v == est.velocity.v);
    CHECK(again.kappa_raw == est.kappa_raw);
    CHECK(again.loss_history == est.loss_history);
}

TEST_CASE("stronger regularization never increases the velocity norm") {
    SyntheticParams p;
    p.kind = SyntheticKind::advdiff;
    p.height = 12;
    p.width = 24;
    p.length = 3;
    p.max_wavenumber = 3;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset ds = gen_synthetic(p, seed);
        VelocityInitConfig weak, strong;
        weak.alpha = 1e-2;
        strong.alpha = 1.0;
        const double nw = sq_norm(estimate_initial_velocity(history_of(ds), weak).velocity);
        const double ns = sq_norm(estimate_initial_velocity(history_of(ds), strong).velocity);
        CAPTURE(seed);
        CHECK(ns <= nw);
    }
}

TEST_CASE("objective gradient is verified by the suite entry residual_loss") {
    // Covered by the gradient-verification suite; here only the objective's value.
    const auto g = periodic_grid(6, 6);
    ad::Tape t;
    const Tensor y({6, 6}, 1.0);
    Tensor vel({2, 6, 6}, 0.5);
    VelocityInitConfig cfg;
    cfg.alpha = 0.1;
    const ad::Var obj = velocity_objective(t.constant(y), t.constant(Tensor({6, 6}, 0.0)), t.constant(vel),
                                           t.constant(Tensor::scalar(0.0)), *g, cfg);
    // Constant Y and zero tendency: R = 0, penalty = alpha * |V|^2 per cell = 0.1 * 0.5.
    CHECK(obj.item() == doctest::Approx(0.05));
}
