#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sstode/embedding.hpp"
#include "sstode/errors.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;
namespace L = sstode::embedding_layout;

namespace {

double plane_at(const Tensor& t, std::size_t ch, std::size_t cell, std::size_t cells) { return t[ch * cells + cell]; }

} // namespace

TEST_CASE("temporal embedding closed form and periodicity") {
    const auto t0 = temporal_embedding(0.0);
    CHECK(t0[0] == 0.0);
    CHECK(t0[1] == 1.0);
    CHECK(t0[2] == 0.0);
    CHECK(t0[3] == 1.0);
    const auto t12 = temporal_embedding(12.0);
    CHECK(std::abs(t12[0]) < 1e-15);
    CHECK(t12[1] == doctest::Approx(-1.0));
    CHECK(t12[2] == doctest::Approx(std::sin(std::numbers::pi / 365.0)).epsilon(1e-14));
    CHECK(t12[2] == doctest::Approx(0.00861).epsilon(1e-3));
    CHECK(t12[3] == doctest::Approx(0.99996).epsilon(1e-5));
    for (double t : {0.0, 7.5, 1234.25}) {
        const auto a = temporal_embedding(t), b = temporal_embedding(t + 365.0 * 24.0);
        for (int k = 0; k < 4; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-9);
    }
}

TEST_CASE("spatial embedding: shape, equator row, longitude periodicity") {
    const auto g = GridSpec::global(32, 64);
    const Tensor s = spatial_embedding(*g);
    CHECK(s.shape() == Shape{6, 32, 64});

    const auto g3 = GridSpec::global(3, 8);  // rows centred at -60, 0, 60
    const Tensor s3 = spatial_embedding(*g3);
    const std::size_t n = g3->cells();
    for (std::size_t c = 0; c < 8; ++c) {
        const std::size_t cell = g3->index(1, c);
        CHECK(std::abs(plane_at(s3, 0, cell, n)) < 1e-15);        // sin(lat)
        CHECK(plane_at(s3, 3, cell, n) == doctest::Approx(1.0));  // cos(lat)
    }

    ad::Tape tape;
    Tensor lat({1, 2}, std::vector<double>{0.3, 0.3});
    Tensor lon({1, 2}, std::vector<double>{0.7, 0.7 + 2.0 * std::numbers::pi});
    const Tensor e = spatial_embedding(tape.constant(lat), tape.constant(lon)).value();
    // Pure longitude channels: sin(lon) and cos(lon).
    CHECK(e[1 * 2 + 0] == doctest::Approx(e[1 * 2 + 1]).epsilon(1e-12));
    CHECK(e[4 * 2 + 0] == doctest::Approx(e[4 * 2 + 1]).epsilon(1e-12));
}

TEST_CASE("full embedding: layout, bounds, interaction block") {
    const auto g = island_grid(8, 16, 2, 5, 4, 9);
    std::vector<double> lsm(g->cells()), oro(g->cells());
    for (std::size_t i = 0; i < g->cells(); ++i) {
        lsm[i] = g->ocean(i) ? 1.0 : 0.0;
        oro[i] = std::sin(0.3 * static_cast<double>(i));
    }
    const std::size_t n = g->cells();
    const Tensor e0 = build_embedding(*g, 0.0, lsm, oro);
    CHECK(e0.shape() == Shape{L::channels, 8, 16});
    CHECK(L::channels == 36);
    for (std::size_t ch = 0; ch < L::lsm; ++ch)
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(plane_at(e0, ch, i, n)) <= 1.0 + 1e-15);
    for (std::size_t i = 0; i < n; ++i) CHECK(plane_at(e0, L::lsm, i, n) == lsm[i]);
    // t = 0: every interaction with a sine temporal component vanishes.
    for (std::size_t s = 0; s < 6; ++s)
        for (std::size_t k : {0u, 2u})
            for (std::size_t i = 0; i < n; ++i) CHECK(plane_at(e0, L::interaction + 4 * s + k, i, n) == 0.0);

    const Tensor e = build_embedding(*g, 30.0, lsm, oro);
    const Tensor sp = spatial_embedding(*g);
    const auto tm = temporal_embedding(30.0);
    for (std::size_t s = 0; s < 6; ++s)
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t i = 0; i < n; i += 7)
                CHECK(plane_at(e, L::interaction + 4 * s + k, i, n) == doctest::Approx(sp[s * n + i] * tm[k]));

    // Pure function of its inputs.
    const Tensor again = build_embedding(*g, 30.0, lsm, oro);
    CHECK(again.vec() == e.vec());

    CHECK_THROWS_AS(build_embedding(*g, 0.0, std::vector<double>(3, 1.0), oro), Error);
}

TEST_CASE("all-land mask gives a zero land-sea plane; orography standardization") {
    const auto g = GridSpec::global(4, 4);
    const std::size_t n = g->cells();
    const Tensor e = build_embedding(*g, 5.0, std::vector<double>(n, 0.0), std::vector<double>(n, 3.0));
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(plane_at(e, L::lsm, i, n) == 0.0);
        CHECK(plane_at(e, L::oro, i, n) == 0.0);  // constant orography -> zero channel
    }
    std::vector<double> oro(n);
    for (std::size_t i = 0; i < n; ++i) oro[i] = static_cast<double>(i);
    const auto z = standardize_orography(*g, oro);
    double m = 0.0, v = 0.0;
    for (double x : z) m += x;
    m /= n;
    for (double x : z) v += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / n == doctest::Approx(1.0));
}

TEST_CASE("embedding builder matches the free function") {
    const auto g = island_grid(6, 8, 1, 3, 2, 5);
    const EmbeddingBuilder b(g);
    std::vector<double> lsm(g->cells());
    for (std::size_t i = 0; i < g->cells(); ++i) lsm[i] = g->ocean(i) ? 1.0 : 0.0;
    const Tensor direct = build_embedding(*g, 17.0, lsm, std::vector<double>(g->cells(), 0.0));
    CHECK(max_abs_diff(b.build(17.0).vec(), direct.vec()) < 1e-15);
}
