#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "sstode/data.hpp"
#include "sstode/errors.hpp"
#include "sstode/io.hpp"
#include "test_util.hpp"

using namespace sstode;
using namespace sstode::testing;
namespace fs = std::filesystem;

namespace {

/// n snapshots of random data on a small island grid; splits by snapshot index.
Dataset toy_dataset(std::size_t n, std::size_t n_train, std::size_t n_val, std::uint64_t seed = 1) {
    Dataset ds;
    ds.grid = island_grid(4, 5, 1, 2, 1, 3);
    ds.cadence_hours = 6.0;
    std::mt19937_64 rng(seed);
    Trajectory sst;
    sst.grid = ds.grid;
    for (std::size_t k = 0; k < n; ++k) sst.push(6.0 * k, random_field(ds.grid, rng).values);
    ds.variables[kSstName] = sst;
    ds.splits.train = {0.0, 6.0 * (n_train - 1)};
    ds.splits.val = {6.0 * n_train, 6.0 * (n_train + n_val - 1)};
    ds.splits.test = {6.0 * (n_train + n_val), 6.0 * (n - 1)};
    return ds;
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

} // namespace

TEST_CASE("normalization of a two-value series") {
    const auto g = periodic_grid(3, 3);
    Trajectory tr;
    tr.grid = g;
    tr.push(0.0, std::vector<double>(9, 0.0));
    tr.push(6.0, std::vector<double>(9, 2.0));
    const auto n = compute_normalization(tr, {0, 1});
    CHECK(n.mean == 1.0);
    CHECK(n.std == 1.0);
    CHECK(n.apply(0.0) == -1.0);
    CHECK(n.apply(2.0) == 1.0);
}

TEST_CASE("standardization uses train statistics and inverts exactly") {
    Dataset ds = toy_dataset(20, 12, 4);
    for (auto& f : ds.variables[kSstName].frames)
        for (std::size_t i = 0; i < f.size(); ++i)
            if (ds.grid->ocean(i)) f[i] = 20.0 + 3.0 * f[i];
    const Dataset raw = ds;
    standardize(ds);
    CHECK(ds.standardized);
    const auto stats = compute_normalization(ds.sst(), ds.split_indices(Split::train));
    CHECK(std::abs(stats.mean) < 1e-6);
    CHECK(std::abs(stats.std - 1.0) < 1e-4);
    for (std::size_t i = 0; i < ds.grid->cells(); ++i)
        if (!ds.grid->ocean(i)) CHECK(ds.sst().frames[3][i] == 0.0);
    unstandardize(ds);
    for (std::size_t k = 0; k < ds.length(); ++k) CHECK(max_abs_diff(ds.sst().frames[k], raw.sst().frames[k]) < 1e-9);
}

TEST_CASE("dataset round-trip is bit-identical; corrupt blobs are rejected") {
    SyntheticParams p;
    p.kind = SyntheticKind::advdiff_forced;
    p.height = 8;
    p.width = 12;
    p.length = 10;
    p.continents = {Continent{2, 4, 3, 6}};
    const Dataset ds = gen_synthetic(p, 3);
    const auto dir = fresh_dir("sstode_ds_rt");
    save_dataset(ds, dir / "d.json");
    LoadOptions raw;
    raw.standardize = false;
    const Dataset back = load_dataset(dir / "d.json", raw);
    CHECK(back.variables.size() == ds.variables.size());
    for (const auto& [name, tr] : ds.variables) {
        CHECK(back.variable(name).frames == tr.frames);
        CHECK(back.variable(name).times == tr.times);
    }
    CHECK(back.grid->mask() == ds.grid->mask());
    CHECK(back.cadence_hours == ds.cadence_hours);
    CHECK(back.splits.test.begin == ds.splits.test.begin);

    // Flip one byte: checksum mismatch.
    const auto blob = dir / "d.sst.bin";
    REQUIRE(fs::exists(blob));
    auto bytes = io::read_file(blob);
    bytes[5] ^= 0x1;
    io::atomic_write(blob, bytes);
    CHECK(code_of([&] { load_dataset(dir / "d.json", raw); }) == ErrorCode::ChecksumMismatch);
    // Truncate: shape mismatch.
    bytes.resize(bytes.size() - 8);
    io::atomic_write(blob, bytes);
    CHECK(code_of([&] { load_dataset(dir / "d.json", raw); }) == ErrorCode::ShapeMismatch);
    // Garbage manifest.
    io::atomic_write_text(dir / "bad.json", "{\"format\": 3}");
    CHECK(code_of([&] { load_dataset(dir / "bad.json"); }) == ErrorCode::ManifestMalformed);
    fs::remove_all(dir);
}

TEST_CASE("standardized datasets round-trip with their statistics") {
    SyntheticParams p;
    p.height = 6;
    p.width = 8;
    p.length = 12;
    Dataset ds = gen_synthetic(p, 9);
    standardize(ds);
    const auto dir = fresh_dir("sstode_ds_std");
    save_dataset(ds, dir / "s.json");
    const Dataset back = load_dataset(dir / "s.json");
    CHECK(back.standardized);
    CHECK(back.sst().frames == ds.sst().frames);
    CHECK(back.normalization.at(kSstName).mean == ds.normalization.at(kSstName).mean);
    CHECK(back.normalization.at(kSstName).std == ds.normalization.at(kSstName).std);
    fs::remove_all(dir);
}

TEST_CASE("sliding windows") {
    const Dataset ds = toy_dataset(10, 10, 0);
    Dataset all_train = ds;
    all_train.splits.val = {};
    all_train.splits.test = {};
    CHECK(make_windows(all_train, 3, 5, Split::train).size() == 3);
    CHECK(make_windows(all_train, 3, 7, Split::train).size() == 1);
    CHECK(code_of([&] { make_windows(all_train, 3, 0, Split::train); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { make_windows(all_train, 3, 8, Split::train); }) == ErrorCode::SplitTooShort);

    const auto w = make_windows(all_train, 3, 2, Split::train);
    CHECK(w.front().input_times == std::vector<double>{0.0, 6.0, 12.0});
    CHECK(w.front().target_times == std::vector<double>{18.0, 24.0});
    CHECK(w.front().t0() == 12.0);
    CHECK(w.front().targets[1] == ds.sst().frames[4]);
    CHECK(w.front().forcing.shape() == Shape{4, 4, 5});
}

TEST_CASE("windows never straddle split boundaries") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 30;
        const std::size_t n_train = 8 + rng() % 10;
        const std::size_t n_val = 6 + rng() % 6;
        const Dataset ds = toy_dataset(n, n_train, n_val, trial);
        for (Split s : {Split::train, Split::val, Split::test}) {
            const auto& range = ds.splits.get(s);
            const std::size_t p = 3, q = 1 + rng() % 3;
            if (ds.split_indices(s).size() < p + q) continue;
            for (const auto& w : make_windows(ds, p, q, s)) {
                for (double t : w.input_times) CHECK(range.contains(t));
                for (double t : w.target_times) CHECK(range.contains(t));
            }
        }
        CHECK(ds.splits.train.end < ds.splits.val.begin);
        CHECK(ds.splits.val.end < ds.splits.test.begin);
    }
}

TEST_CASE("synthetic generator: diffusion of a Fourier mode follows the discrete decay") {
    SyntheticParams p;
    p.kind = SyntheticKind::diffusion;
    p.kappa = 0.2;
    p.height = 16;
    p.width = 32;
    p.boundary_y = Boundary::periodic;
    p.initial = InitialCondition::sin_mode;
    p.mode_k = 2;
    p.length = 5;
    const Dataset ds = gen_synthetic(p, 0);
    const auto& tr = ds.sst();
    const double lambda = mode_eigenvalue(*ds.grid, 2);
    // Peak cell of the mode.
    std::size_t peak = 0;
    for (std::size_t i = 0; i < ds.grid->cells(); ++i)
        if (std::abs(tr.frames[0][i]) > std::abs(tr.frames[0][peak])) peak = i;
    for (std::size_t k = 1; k < tr.size(); ++k) {
        const double expect = std::exp(-0.2 * lambda * (tr.times[k] - tr.times[0]));
        CHECK(tr.frames[k][peak] / tr.frames[0][peak] == doctest::Approx(expect).epsilon(1e-3));
    }
}

TEST_CASE("synthetic generator: advection drift, determinism, quiescent case") {
    SyntheticParams p;
    p.kind = SyntheticKind::advection;
    p.height = 32;
    p.width = 64;
    p.boundary_y = Boundary::periodic;
    p.length = 9;  // 48 h
    p.initial = InitialCondition::sin_mode;
    p.mode_k = 1;
    p.mode_l = 1;
    const Dataset ds = gen_synthetic(p, 0);
    // sin(X) cos(Y) = (sin(X + Y) + sin(X - Y)) / 2: the phases of the two
    // diagonal Fourier coefficients advance by sx + sy and sx - sy.
    const std::size_t H = 32, W = 64;
    auto phase = [&](const std::vector<double>& f, double sign) {
        double re = 0.0, im = 0.0;
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const double a = 2.0 * std::numbers::pi * (c / double(W) + sign * r / double(H));
                re += f[r * W + c] * std::cos(a);
                im += f[r * W + c] * std::sin(a);
            }
        return std::atan2(im, re);
    };
    auto wrap = [](double d) {
        while (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
        while (d < -std::numbers::pi) d += 2.0 * std::numbers::pi;
        return d;
    };
    const auto& tr = ds.sst();
    double sum_phase = 0.0, diff_phase = 0.0;
    for (std::size_t k = 1; k < tr.size(); ++k) {
        sum_phase += wrap(phase(tr.frames[k], 1.0) - phase(tr.frames[k - 1], 1.0));
        diff_phase += wrap(phase(tr.frames[k], -1.0) - phase(tr.frames[k - 1], -1.0));
    }
    const double hours = tr.times.back() - tr.times.front();
    REQUIRE(hours == 48.0);
    const double dx = 0.5 * (sum_phase + diff_phase) / (2.0 * std::numbers::pi) * W;
    const double dy = 0.5 * (sum_phase - diff_phase) / (2.0 * std::numbers::pi) * H;
    CHECK(dx == doctest::Approx(0.5 * hours).epsilon(0.02));
    CHECK(dy == doctest::Approx(-0.3 * hours).epsilon(0.02));

    const Dataset again = gen_synthetic(p, 0);
    CHECK(again.sst().frames == ds.sst().frames);

    SyntheticParams q;
    q.kind = SyntheticKind::advdiff_forced;
    q.kappa = 0.0;
    q.u = q.v = 0.0;
    q.source_amplitude = 0.0;
    q.height = 6;
    q.width = 8;
    q.length = 6;
    const Dataset still = gen_synthetic(q, 5);
    for (std::size_t k = 1; k < still.length(); ++k) CHECK(still.sst().frames[k] == still.sst().frames[0]);
}

TEST_CASE("forced synthetic data carries the source in the SW channel") {
    SyntheticParams p;
    p.kind = SyntheticKind::advdiff_forced;
    p.height = 6;
    p.width = 8;
    p.length = 5;
    p.source_amplitude = 0.5;
    p.flux_scale = 2.0;
    const Dataset ds = gen_synthetic(p, 1);
    REQUIRE(ds.has_forcing());
    const auto prof = source_profile(*ds.grid);
    const auto& sw = ds.variable("sw");
    for (std::size_t k = 0; k < sw.size(); ++k) {
        const double q = 0.5 * std::sin(2.0 * std::numbers::pi * sw.times[k] / 24.0);
        for (std::size_t i = 0; i < ds.grid->cells(); i += 5) CHECK(sw.frames[k][i] == doctest::Approx(q * prof[i] / 2.0).scale(1.0));
        for (double v : ds.variable("lw").frames[k]) CHECK(v == 0.0);
    }
}

TEST_CASE("unstable generator parameters are rejected") {
    SyntheticParams p;
    p.kappa = 5.0;
    p.substeps = 1;
    CHECK(code_of([&] { gen_synthetic(p, 0); }) == ErrorCode::UnstableParams);
}

TEST_CASE("subsampling keeps every n-th snapshot") {
    const Dataset ds = toy_dataset(12, 8, 2);
    const Dataset half = subsample(ds, 2);
    CHECK(half.length() == 6);
    CHECK(half.cadence_hours == 12.0);
    CHECK(half.sst().frames[2] == ds.sst().frames[4]);
    CHECK(parse_split("val") == Split::val);
    CHECK(parse_synthetic_kind("advdiff_forced") == SyntheticKind::advdiff_forced);
}
