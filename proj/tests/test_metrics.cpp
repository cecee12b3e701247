#include <doctest.h>

#include <cmath>
#include <random>

#include "sstode/errors.hpp"
#include "sstode/metrics.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;

namespace {

/// 3x3 grid with exactly five ocean cells.
GridPtr five_point_grid() {
    return GridSpec::global(3, 3, {1, 0, 1, 0, 1, 0, 1, 0, 1});
}

Trajectory one_frame(const GridPtr& g, const std::vector<double>& ocean_values) {
    std::vector<double> f(g->cells(), 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < g->cells(); ++i)
        if (g->ocean(i)) f[i] = ocean_values[k++];
    Trajectory t;
    t.grid = g;
    t.push(6.0, f);
    return t;
}

Trajectory random_traj(const GridPtr& g, std::size_t n, std::mt19937_64& rng) {
    Trajectory t;
    t.grid = g;
    for (std::size_t k = 0; k < n; ++k) t.push(6.0 * (k + 1), random_field(g, rng).values);
    return t;
}

} // namespace

TEST_CASE("five-point toy example matches hand-computed formulas") {
    const auto g = five_point_grid();
    const auto truth = one_frame(g, {1, 2, 3, 4, 5});
    const auto pred = one_frame(g, {1.5, 1.5, 3.5, 3, 6});
    const auto r = evaluate(pred, truth, Normalization{});
    CHECK(r.cell_count == 5);
    CHECK(r.points == 5);
    CHECK(std::abs(r.mse - 0.55) < 1e-12);
    CHECK(std::abs(r.mae - 0.7) < 1e-12);
    // Anomalies: pred - 3.1, truth - 3; sum of products 10.5, squares 13.7 and 10.
    CHECK(std::abs(r.acc - 10.5 / std::sqrt(137.0)) < 1e-12);
    CHECK(std::abs(pooled_acc({1.5, 1.5, 3.5, 3, 6}, {1, 2, 3, 4, 5}) - 10.5 / std::sqrt(137.0)) < 1e-12);
}

TEST_CASE("identity, offset and anti-correlated predictions") {
    const auto g = island_grid(6, 8, 1, 3, 2, 5);
    std::mt19937_64 rng(3);
    const auto truth = random_traj(g, 4, rng);
    const Normalization norm{15.0, 2.0};
    const auto same = evaluate(truth, truth, norm);
    CHECK(same.mse == 0.0);
    CHECK(same.mae == 0.0);
    CHECK(same.acc == doctest::Approx(1.0).epsilon(1e-12));

    // +0.25 standardized = +0.5 after de-normalization.
    Trajectory off = truth, anti = truth;
    for (auto& f : off.frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            if (g->ocean(i)) f[i] += 0.25;
    const auto o = evaluate(off, truth, norm);
    CHECK(o.mse == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(o.mae == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(o.acc == doctest::Approx(1.0).epsilon(1e-12));

    double mean = 0.0;
    std::size_t n = 0;
    for (const auto& f : truth.frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            if (g->ocean(i)) {
                mean += f[i];
                ++n;
            }
    mean /= static_cast<double>(n);
    for (auto& f : anti.frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            if (g->ocean(i)) f[i] = 2.0 * mean - f[i];
    CHECK(evaluate(anti, truth, norm).acc == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("metric invariants: symmetry, scaling, bounds") {
    const auto g = island_grid(6, 8, 1, 3, 2, 5);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_traj(g, 3, rng), b = random_traj(g, 3, rng);
        const auto ab = evaluate(a, b, Normalization{0.0, 1.0});
        const auto ba = evaluate(b, a, Normalization{0.0, 1.0});
        CHECK(ab.mse == ba.mse);
        CHECK(ab.mae == ba.mae);
        CHECK(ab.mse >= 0.0);
        CHECK(ab.mae * ab.mae <= ab.mse + 1e-15);
        CHECK(ab.acc >= -1.0);
        CHECK(ab.acc <= 1.0);
        const double s = 3.0;
        const auto scaled = evaluate(a, b, Normalization{0.0, s});
        CHECK(scaled.mse == doctest::Approx(s * s * ab.mse).epsilon(1e-12));
        CHECK(scaled.mae == doctest::Approx(s * ab.mae).epsilon(1e-12));
        CHECK(scaled.acc == doctest::Approx(ab.acc).epsilon(1e-12));
        REQUIRE(ab.step_mse.size() == 3);
        double pooled = 0.0;
        for (double m : ab.step_mse) pooled += m / 3.0;
        CHECK(pooled == doctest::Approx(ab.mse).epsilon(1e-12));
    }
}

TEST_CASE("selections and empty evaluations") {
    const auto g = island_grid(6, 8, 2, 4, 2, 5);
    std::mt19937_64 rng(1);
    const auto a = random_traj(g, 2, rng), b = random_traj(g, 2, rng);
    EvalSelection coast;
    coast.cells = g->coastal_cells();
    std::size_t ncoast = 0;
    for (auto c : coast.cells) ncoast += c;
    const auto r = evaluate(a, b, Normalization{}, coast);
    CHECK(r.cell_count == ncoast);
    EvalSelection none;
    none.cells.assign(g->cells(), 0);
    try {
        evaluate(a, b, Normalization{}, none);
        FAIL("expected EmptyEvaluation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyEvaluation);
    }
    Trajectory short_b = b;
    short_b.frames.pop_back();
    short_b.times.pop_back();
    CHECK_THROWS_AS(evaluate(a, short_b, Normalization{}), Error);
}

TEST_CASE("differentiable metrics agree with the report") {
    const auto g = five_point_grid();
    const auto truth = one_frame(g, {1, 2, 3, 4, 5});
    const auto pred = one_frame(g, {1.5, 1.5, 3.5, 3, 6});
    ad::Tape t;
    const Tensor tp({1, 3, 3}, pred.frames[0]), tt({1, 3, 3}, truth.frames[0]);
    CHECK(mse_loss(t.constant(tp), t.constant(tt), *g).item() == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(acc_metric(t.constant(tp), t.constant(tt), *g).item() == doctest::Approx(10.5 / std::sqrt(137.0)).epsilon(1e-12));
}

TEST_CASE("ablation tables") {
    CHECK(ablation_json({}).empty());
    AblationRow row;
    row.variant = "SSTODE";
    row.report.mse = 0.0527;
    row.report.mae = 0.1;
    row.report.acc = 0.9;
    const std::string text = ablation_text({row});
    CHECK(text.find("SSTODE") != std::string::npos);
    CHECK(text.find("52.7") != std::string::npos);
    const auto j = ablation_json({row});
    CHECK(j.size() == 1);
    CHECK(j[0]["mse"] == 0.0527);
}
