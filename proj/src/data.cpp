#include "sstode/data.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sstode/dynamics.hpp"
#include "sstode/errors.hpp"
#include "sstode/io.hpp"

namespace sstode {

namespace fs = std::filesystem;
using io::json;

namespace {

constexpr const char* kDatasetFormat = "sstode-dataset";
constexpr double kTimeTol = 1e-9;

const char* boundary_name(Boundary b) { return b == Boundary::periodic ? "periodic" : "reflective"; }

Boundary parse_boundary(const std::string& s) {
    if (s == "periodic") return Boundary::periodic;
    if (s == "reflective") return Boundary::reflective;
    throw Error(ErrorCode::ManifestMalformed, "unknown boundary '" + s + "'");
}

template <typename T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ManifestMalformed, std::string("manifest field '") + key + "': " + e.what());
    }
}

std::vector<std::uint8_t> blob_bytes(std::span<const double> values, DType dtype) {
    std::vector<std::uint8_t> out;
    if (dtype == DType::f64)
        io::append_f64_le(out, values);
    else
        io::append_f32_le(out, values);
    return out;
}

} // namespace

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error(ErrorCode::InvalidArgument, "unknown split '" + s + "'");
}

const TimeRange& Splits::get(Split s) const {
    switch (s) {
        case Split::train: return train;
        case Split::val: return val;
        case Split::test: return test;
    }
    return test;
}

const Trajectory& Dataset::variable(const std::string& name) const {
    auto it = variables.find(name);
    require(it != variables.end(), ErrorCode::InvalidArgument, "dataset has no variable '" + name + "'");
    return it->second;
}

bool Dataset::has_forcing() const {
    for (const char* f : kFluxNames)
        if (!variables.count(f)) return false;
    return true;
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
    const TimeRange& r = splits.get(s);
    std::vector<std::size_t> idx;
    const auto& times = sst().times;
    for (std::size_t k = 0; k < times.size(); ++k)
        if (r.contains(times[k])) idx.push_back(k);
    return idx;
}

Normalization compute_normalization(const Trajectory& traj, const std::vector<std::size_t>& indices) {
    const GridSpec& g = *traj.grid;
    double n = 0, mean = 0;
    for (std::size_t k : indices)
        for (std::size_t i = 0; i < g.cells(); ++i)
            if (g.ocean(i)) {
                n += 1;
                mean += traj.frames.at(k)[i];
            }
    require(n > 0, ErrorCode::EmptyEvaluation, "normalization: no ocean samples in the selected frames");
    mean /= n;
    double var = 0;
    for (std::size_t k : indices)
        for (std::size_t i = 0; i < g.cells(); ++i)
            if (g.ocean(i)) {
                const double d = traj.frames[k][i] - mean;
                var += d * d;
            }
    var /= n;
    Normalization norm;
    norm.mean = mean;
    norm.std = var > 1e-24 ? std::sqrt(var) : 1.0;
    return norm;
}

void standardize(Dataset& ds) {
    if (ds.standardized) return;
    const auto train = ds.split_indices(Split::train);
    for (auto& [name, traj] : ds.variables) {
        if (!ds.normalization.count(name)) ds.normalization[name] = compute_normalization(traj, train);
        const Normalization norm = ds.normalization[name];
        const GridSpec& g = *traj.grid;
        for (auto& frame : traj.frames)
            for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = g.ocean(i) ? norm.apply(frame[i]) : 0.0;
    }
    ds.standardized = true;
}

void unstandardize(Dataset& ds) {
    if (!ds.standardized) return;
    for (auto& [name, traj] : ds.variables) {
        const Normalization norm = ds.normalization.at(name);
        const GridSpec& g = *traj.grid;
        for (auto& frame : traj.frames)
            for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = g.ocean(i) ? norm.invert(frame[i]) : 0.0;
    }
    ds.standardized = false;
}

void save_dataset(const Dataset& ds, const fs::path& manifest_path, DType dtype) {
    const GridSpec& g = *ds.grid;
    const auto& o = g.options();
    const fs::path dir = manifest_path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const std::string stem = manifest_path.stem().string();

    json m;
    m["format"] = kDatasetFormat;
    m["version"] = 1;
    m["dtype"] = dtype == DType::f64 ? "f64" : "f32";
    m["byte_order"] = "little-endian";
    m["layout"] = "row-major [T,H,W]";
    m["dims"] = {{"time", ds.length()}, {"height", g.height()}, {"width", g.width()}};
    m["cadence_hours"] = ds.cadence_hours;
    m["times"] = ds.sst().times;
    m["grid"] = {{"dx", o.dx},
                 {"dy", o.dy},
                 {"boundary_x", boundary_name(o.boundary_x)},
                 {"boundary_y", boundary_name(o.boundary_y)},
                 {"lat_origin_deg", o.lat_origin_deg},
                 {"lat_step_deg", g.lat_step_deg()},
                 {"lon_origin_deg", o.lon_origin_deg},
                 {"lon_step_deg", g.lon_step_deg()},
                 {"cos_lat_metric", o.cos_lat_metric},
                 {"region_crop", o.region_crop}};
    m["mask"] = g.mask();
    m["channel_order"] = std::vector<std::string>(kFluxNames.begin(), kFluxNames.end());
    m["standardized"] = ds.standardized;
    for (Split s : {Split::train, Split::val, Split::test}) {
        const TimeRange& r = ds.splits.get(s);
        m["splits"][to_string(s)] = {r.begin, r.end};
    }
    json vars = json::array();
    for (const auto& [name, traj] : ds.variables) {
        require(traj.size() == ds.length(), ErrorCode::ShapeMismatch, "variable '" + name + "' has a different length");
        std::vector<double> flat;
        flat.reserve(traj.size() * g.cells());
        for (const auto& f : traj.frames) flat.insert(flat.end(), f.begin(), f.end());
        const auto bytes = blob_bytes(flat, dtype);
        const std::string blob = stem + "." + name + ".bin";
        io::atomic_write(dir / blob, bytes);
        json v = {{"name", name}, {"blob", blob}, {"bytes", bytes.size()}, {"checksum", io::checksum_string(bytes)}};
        if (auto it = ds.normalization.find(name); it != ds.normalization.end())
            v["normalization"] = {{"mean", it->second.mean}, {"std", it->second.std}};
        vars.push_back(v);
    }
    m["variables"] = vars;
    if (!ds.orography.empty()) {
        const auto bytes = blob_bytes(ds.orography, DType::f64);
        const std::string blob = stem + ".orography.bin";
        io::atomic_write(dir / blob, bytes);
        m["orography"] = {{"blob", blob}, {"bytes", bytes.size()}, {"checksum", io::checksum_string(bytes)}};
    }
    io::atomic_write_text(manifest_path, m.dump(2));
}

Dataset load_dataset(const fs::path& manifest_path, const LoadOptions& opts) {
    const json m = io::read_json(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    if (field<std::string>(m, "format") != kDatasetFormat)
        throw Error(ErrorCode::ManifestMalformed, manifest_path.string() + " is not a dataset manifest");
    if (field<std::string>(m, "byte_order") != "little-endian")
        throw Error(ErrorCode::ManifestMalformed, "only little-endian blobs are supported");
    const std::string dtype = field<std::string>(m, "dtype");
    require(dtype == "f64" || dtype == "f32", ErrorCode::ManifestMalformed, "dtype must be f32 or f64");
    const std::size_t elem = dtype == "f64" ? 8 : 4;

    const json& dims = m.at("dims");
    const auto T = field<std::size_t>(dims, "time"), H = field<std::size_t>(dims, "height"),
               W = field<std::size_t>(dims, "width");
    const json& gj = m.at("grid");
    GridOptions o;
    o.height = H;
    o.width = W;
    o.dx = field<double>(gj, "dx");
    o.dy = field<double>(gj, "dy");
    o.boundary_x = parse_boundary(field<std::string>(gj, "boundary_x"));
    o.boundary_y = parse_boundary(field<std::string>(gj, "boundary_y"));
    o.lat_origin_deg = field<double>(gj, "lat_origin_deg");
    o.lat_step_deg = field<double>(gj, "lat_step_deg");
    o.lon_origin_deg = field<double>(gj, "lon_origin_deg");
    o.lon_step_deg = field<double>(gj, "lon_step_deg");
    o.cos_lat_metric = field<bool>(gj, "cos_lat_metric");
    o.region_crop = gj.value("region_crop", false);
    o.mask = field<std::vector<std::uint8_t>>(m, "mask");
    require(o.mask.size() == H * W, ErrorCode::ShapeMismatch, "mask does not match dims");

    Dataset ds;
    ds.grid = GridSpec::create(std::move(o));
    ds.cadence_hours = field<double>(m, "cadence_hours");
    const auto times = field<std::vector<double>>(m, "times");
    require(times.size() == T, ErrorCode::ShapeMismatch, "timestamp count does not match dims.time");
    for (Split s : {Split::train, Split::val, Split::test}) {
        const auto r = field<std::vector<double>>(m.at("splits"), to_string(s));
        require(r.size() == 2, ErrorCode::ManifestMalformed, "split ranges need [begin, end]");
        TimeRange& dst = s == Split::train ? ds.splits.train : s == Split::val ? ds.splits.val : ds.splits.test;
        dst = {r[0], r[1]};
    }
    ds.standardized = field<bool>(m, "standardized");

    const std::size_t n = H * W;
    for (const json& v : m.at("variables")) {
        const auto name = field<std::string>(v, "name");
        const auto bytes = io::read_file(dir / field<std::string>(v, "blob"));
        require(bytes.size() == T * n * elem, ErrorCode::ShapeMismatch,
                "blob of '" + name + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(T * n * elem));
        require(io::checksum_string(bytes) == field<std::string>(v, "checksum"), ErrorCode::ChecksumMismatch,
                "blob of '" + name + "' fails its checksum");
        const auto values = elem == 8 ? io::decode_f64_le(bytes) : io::decode_f32_le(bytes);
        Trajectory traj;
        traj.grid = ds.grid;
        for (std::size_t k = 0; k < T; ++k)
            traj.push(times[k], std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(k * n),
                                                    values.begin() + static_cast<std::ptrdiff_t>((k + 1) * n)));
        ds.variables[name] = std::move(traj);
        if (v.contains("normalization"))
            ds.normalization[name] = {field<double>(v["normalization"], "mean"), field<double>(v["normalization"], "std")};
    }
    require(ds.variables.count(kSstName), ErrorCode::ManifestMalformed, "dataset has no 'sst' variable");
    if (m.contains("orography")) {
        const json& oj = m["orography"];
        const auto bytes = io::read_file(dir / field<std::string>(oj, "blob"));
        require(bytes.size() == n * 8, ErrorCode::ShapeMismatch, "orography blob has the wrong size");
        require(io::checksum_string(bytes) == field<std::string>(oj, "checksum"), ErrorCode::ChecksumMismatch,
                "orography blob fails its checksum");
        ds.orography = io::decode_f64_le(bytes);
    }
    // Land cells must be exactly zero in every stored frame.
    for (const auto& [name, traj] : ds.variables)
        for (const auto& f : traj.frames)
            for (std::size_t i = 0; i < n; ++i)
                require(ds.grid->ocean(i) || f[i] == 0.0, ErrorCode::ShapeMismatch,
                        "variable '" + name + "' has data on land cells; mask inconsistent");
    if (opts.standardize) standardize(ds);
    return ds;
}

Trajectory Window::history(const GridPtr& grid) const {
    Trajectory t;
    t.grid = grid;
    for (std::size_t k = 0; k < inputs.size(); ++k) t.push(input_times[k], inputs[k]);
    return t;
}

std::vector<Window> make_windows(const Dataset& ds, std::size_t p, std::size_t q, Split split) {
    require(q > 0, ErrorCode::InvalidArgument, "make_windows: q must be at least 1");
    require(p >= 3, ErrorCode::InvalidArgument, "make_windows: p must be at least 3");
    const auto idx = ds.split_indices(split);
    require(idx.size() >= p + q, ErrorCode::SplitTooShort,
            std::string("split '") + to_string(split) + "' has " + std::to_string(idx.size()) +
                " snapshots, need p+q=" + std::to_string(p + q));
    const Trajectory& sst = ds.sst();
    const bool forcing = ds.has_forcing();
    const GridSpec& g = *ds.grid;
    std::vector<Window> out;
    for (std::size_t s = 0; s + p + q <= idx.size(); ++s) {
        bool contiguous = true;
        for (std::size_t k = s + 1; k < s + p + q; ++k) {
            const double dt = sst.times[idx[k]] - sst.times[idx[k - 1]];
            contiguous = contiguous && idx[k] == idx[k - 1] + 1 &&
                         std::abs(dt - ds.cadence_hours) <= kTimeTol * std::max(1.0, ds.cadence_hours);
        }
        if (!contiguous) continue;
        Window w;
        w.start = idx[s];
        for (std::size_t k = 0; k < p; ++k) {
            w.input_times.push_back(sst.times[idx[s + k]]);
            w.inputs.push_back(sst.frames[idx[s + k]]);
        }
        for (std::size_t k = p; k < p + q; ++k) {
            w.target_times.push_back(sst.times[idx[s + k]]);
            w.targets.push_back(sst.frames[idx[s + k]]);
        }
        w.forcing = Tensor({kFluxNames.size(), g.height(), g.width()});
        if (forcing) {
            const std::size_t t0 = idx[s + p - 1];
            for (std::size_t c = 0; c < kFluxNames.size(); ++c) {
                const auto& f = ds.variable(kFluxNames[c]).frames[t0];
                std::copy(f.begin(), f.end(), w.forcing.vec().begin() + static_cast<std::ptrdiff_t>(c * g.cells()));
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

Dataset subsample(const Dataset& ds, std::size_t factor) {
    require(factor >= 1, ErrorCode::InvalidArgument, "subsample factor must be >= 1");
    Dataset out = ds;
    out.cadence_hours = ds.cadence_hours * static_cast<double>(factor);
    for (auto& [name, traj] : out.variables) {
        const Trajectory& src = ds.variable(name);
        traj.times.clear();
        traj.frames.clear();
        for (std::size_t k = 0; k < src.size(); k += factor) traj.push(src.times[k], src.frames[k]);
    }
    return out;
}

const char* to_string(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::diffusion: return "diffusion";
        case SyntheticKind::advection: return "advection";
        case SyntheticKind::advdiff: return "advdiff";
        case SyntheticKind::advdiff_forced: return "advdiff_forced";
    }
    return "?";
}

SyntheticKind parse_synthetic_kind(const std::string& s) {
    if (s == "diffusion") return SyntheticKind::diffusion;
    if (s == "advection") return SyntheticKind::advection;
    if (s == "advdiff") return SyntheticKind::advdiff;
    if (s == "advdiff_forced") return SyntheticKind::advdiff_forced;
    throw Error(ErrorCode::InvalidArgument,
                "unknown synthetic kind '" + s + "' (diffusion|advection|advdiff|advdiff_forced)");
}

std::vector<double> source_profile(const GridSpec& g) {
    std::vector<double> out(g.cells(), 0.0);
    for (std::size_t r = 0; r < g.height(); ++r)
        for (std::size_t c = 0; c < g.width(); ++c) {
            const std::size_t i = g.index(r, c);
            if (g.ocean(i)) out[i] = std::cos(g.lat_deg(r) * std::numbers::pi / 180.0);
        }
    return out;
}

namespace {

std::vector<double> initial_field(const GridSpec& g, const SyntheticParams& p, std::mt19937_64& rng) {
    const std::size_t H = g.height(), W = g.width();
    const double pi = std::numbers::pi;
    std::vector<double> y(g.cells(), 0.0);
    // Meridional basis: cosines for a wall (zero flux), full periods when periodic.
    auto meridional = [&](std::size_t l, std::size_t r, double phase) {
        const double rr = static_cast<double>(r) + 0.5;
        if (g.boundary_y() == Boundary::periodic) return std::cos(2.0 * pi * static_cast<double>(l) * rr / static_cast<double>(H) + phase);
        return std::cos(pi * static_cast<double>(l) * rr / static_cast<double>(H));
    };
    if (p.initial == InitialCondition::sin_mode) {
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c)
                y[g.index(r, c)] = std::sin(2.0 * pi * static_cast<double>(p.mode_k * c) / static_cast<double>(W)) *
                                   (p.mode_l ? meridional(p.mode_l, r, 0.0) : 1.0);
    } else {
        std::normal_distribution<double> amp(0.0, 1.0);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);
        for (std::size_t k = 0; k <= p.max_wavenumber; ++k)
            for (std::size_t l = 0; l <= p.max_wavenumber; ++l) {
                if (k == 0 && l == 0) continue;
                const double a = amp(rng) / static_cast<double>(k + l);
                const double px = phase(rng), py = phase(rng);
                for (std::size_t r = 0; r < H; ++r)
                    for (std::size_t c = 0; c < W; ++c)
                        y[g.index(r, c)] +=
                            a * std::cos(2.0 * pi * static_cast<double>(k * c) / static_cast<double>(W) + px) *
                            meridional(l, r, py);
            }
    }
    if (p.coastal_anomaly != 0.0 && !g.fully_ocean()) {
        // Cold band decaying away from the nearest land cell.
        std::vector<std::size_t> land;
        for (std::size_t i = 0; i < g.cells(); ++i)
            if (!g.ocean(i)) land.push_back(i);
        for (std::size_t i = 0; i < g.cells(); ++i) {
            if (!g.ocean(i)) continue;
            const double ri = static_cast<double>(i / W), ci = static_cast<double>(i % W);
            double best = INFINITY;
            for (std::size_t j : land) {
                const double dr = ri - static_cast<double>(j / W);
                double dc = std::abs(ci - static_cast<double>(j % W));
                if (g.boundary_x() == Boundary::periodic) dc = std::min(dc, static_cast<double>(W) - dc);
                best = std::min(best, std::sqrt(dr * dr + dc * dc));
            }
            y[i] -= p.coastal_anomaly * std::exp(-(best - 1.0) / p.coastal_width);
        }
    }
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (!g.ocean(i)) y[i] = 0.0;
    return y;
}

} // namespace

Dataset gen_synthetic(const SyntheticParams& p, std::uint64_t seed) {
    require(p.length >= 1 && p.cadence_hours > 0 && p.substeps >= 1, ErrorCode::InvalidArgument,
            "synthetic: length, cadence and substeps must be positive");
    require(p.train_fraction > 0 && p.val_fraction >= 0 && p.train_fraction + p.val_fraction <= 1.0,
            ErrorCode::InvalidArgument, "synthetic: invalid split fractions");
    GridOptions o;
    o.height = p.height;
    o.width = p.width;
    o.boundary_y = p.boundary_y;
    o.mask.assign(p.height * p.width, 1);
    for (const auto& c : p.continents) {
        require(c.row0 < c.row1 && c.row1 <= p.height && c.col0 < c.col1 && c.col1 <= p.width,
                ErrorCode::InvalidArgument, "synthetic: continent outside the grid");
        for (std::size_t r = c.row0; r < c.row1; ++r)
            for (std::size_t col = c.col0; col < c.col1; ++col) o.mask[r * p.width + col] = 0;
    }
    const GridPtr grid = GridSpec::create(std::move(o));
    const GridSpec& g = *grid;

    const bool adv = p.kind != SyntheticKind::diffusion;
    const bool dif = p.kind != SyntheticKind::advection;
    const double kappa = dif ? p.kappa : 0.0;
    const double u = adv ? p.u : 0.0, v = adv ? p.v : 0.0;
    require(kappa >= 0, ErrorCode::UnstableParams, "synthetic: kappa must be >= 0");
    const double h = p.cadence_hours / static_cast<double>(p.substeps);
    if (!stability_bound(kappa, g.dx(), g.dy(), h))
        throw Error(ErrorCode::UnstableParams, "synthetic: internal step " + std::to_string(h) +
                                                   " h violates the diffusion bound for kappa=" + std::to_string(kappa));
    if (h * (std::abs(u) / g.dx() + std::abs(v) / g.dy()) > 1.0)
        throw Error(ErrorCode::UnstableParams, "synthetic: internal step violates the advective CFL limit");

    std::mt19937_64 rng(seed);
    std::vector<double> y = initial_field(g, p, rng);
    const std::size_t n = g.cells();
    std::vector<double> gx(n), gy(n), lap(n);
    auto rhs = [&](const std::vector<double>& f, std::vector<double>& out) {
        if (adv) {
            stencil::grad_x(g, f, gx);
            stencil::grad_y(g, f, gy);
        }
        if (dif) stencil::laplacian(g, f, lap);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = g.ocean(i) ? (adv ? -(u * gx[i] + v * gy[i]) : 0.0) + (dif ? kappa * lap[i] : 0.0) : 0.0;
    };

    const bool forced = p.kind == SyntheticKind::advdiff_forced;
    const std::vector<double> profile = source_profile(g);
    auto source = [&](double t) {
        std::vector<double> q(n);
        const double s = p.source_amplitude * std::sin(2.0 * std::numbers::pi * t / kHoursPerDay);
        for (std::size_t i = 0; i < n; ++i) q[i] = s * profile[i];
        return q;
    };

    Dataset ds;
    ds.grid = grid;
    ds.cadence_hours = p.cadence_hours;
    Trajectory sst;
    sst.grid = grid;
    std::array<Trajectory, 4> flux;
    for (auto& f : flux) f.grid = grid;

    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t k = 0; k < p.length; ++k) {
        const double t = p.t_start + static_cast<double>(k) * p.cadence_hours;
        if (k > 0) {
            for (std::size_t s = 0; s < p.substeps; ++s) {
                rhs(y, k1);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
                rhs(tmp, k2);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
                rhs(tmp, k3);
                for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
                rhs(tmp, k4);
                for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        std::vector<double> frame = y;
        if (forced) {
            const auto q = source(t);
            for (std::size_t i = 0; i < n; ++i) frame[i] += q[i];
            std::vector<double> sw(n);
            for (std::size_t i = 0; i < n; ++i) sw[i] = q[i] / p.flux_scale;
            flux[0].push(t, std::move(sw));
            for (std::size_t c = 1; c < 4; ++c) flux[c].push(t, std::vector<double>(n, 0.0));
        }
        sst.push(t, std::move(frame));
    }
    ds.variables[kSstName] = std::move(sst);
    if (forced)
        for (std::size_t c = 0; c < 4; ++c) ds.variables[kFluxNames[c]] = std::move(flux[c]);

    const auto n_train = static_cast<std::size_t>(std::floor(p.train_fraction * static_cast<double>(p.length)));
    const auto n_val = static_cast<std::size_t>(std::floor(p.val_fraction * static_cast<double>(p.length)));
    const auto& times = ds.sst().times;
    auto range = [&](std::size_t a, std::size_t b) {
        return b > a ? TimeRange{times[a], times[b - 1]} : TimeRange{};
    };
    ds.splits.train = range(0, n_train);
    ds.splits.val = range(n_train, n_train + n_val);
    ds.splits.test = range(n_train + n_val, p.length);
    ds.orography.assign(n, 0.0);
    return ds;
}

} // namespace sstode
