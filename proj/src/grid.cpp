#include "sstode/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sstode/errors.hpp"

namespace sstode {

namespace {

void check_finite(const ScalarField& f, const char* what) {
    const auto& g = *f.grid;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        if (g.ocean(c) && !std::isfinite(f.values[c]))
            throw Error(ErrorCode::NonFiniteInput, std::string(what) + ": non-finite value at cell " +
                                                       std::to_string(c));
    }
}

void check_field(const ScalarField& f) {
    require(f.grid != nullptr, ErrorCode::InvalidArgument, "field without grid");
    require(f.values.size() == f.grid->cells(), ErrorCode::ShapeMismatch,
            "field has " + std::to_string(f.values.size()) + " values for " +
                std::to_string(f.grid->cells()) + " cells");
}

double wrap_lon(double lon) {
    double r = std::fmod(lon, 360.0);
    return r < 0 ? r + 360.0 : r;
}

} // namespace

GridSpec::GridSpec(GridOptions opts) : opts_(std::move(opts)) {
    const std::size_t h = opts_.height, w = opts_.width;
    const std::size_t min_extent = opts_.region_crop ? 1 : 3;
    require(h >= min_extent && w >= min_extent, ErrorCode::InvalidArgument,
            "grid must be at least 3x3, got " + std::to_string(h) + "x" + std::to_string(w));
    if (opts_.region_crop)
        require((opts_.boundary_x == Boundary::reflective || w >= 3) &&
                    (opts_.boundary_y == Boundary::reflective || h >= 3),
                ErrorCode::InvalidArgument, "periodic axis needs at least 3 cells");
    require(opts_.dx > 0 && opts_.dy > 0, ErrorCode::InvalidArgument, "grid spacing must be positive");
    if (opts_.mask.empty()) opts_.mask.assign(h * w, 1);
    require(opts_.mask.size() == h * w, ErrorCode::ShapeMismatch,
            "mask has " + std::to_string(opts_.mask.size()) + " entries, expected " + std::to_string(h * w));
    for (auto& m : opts_.mask) m = m ? 1 : 0;
    if (opts_.lat_step_deg == 0.0) opts_.lat_step_deg = 180.0 / static_cast<double>(h);
    if (opts_.lon_step_deg == 0.0) opts_.lon_step_deg = 360.0 / static_cast<double>(w);

    for (auto m : opts_.mask) ocean_count_ += m;

    row_dx_.resize(h);
    for (std::size_t r = 0; r < h; ++r) {
        double scale = 1.0;
        if (opts_.cos_lat_metric)
            scale = std::max(std::cos(lat_deg(r) * std::numbers::pi / 180.0), 1e-3);
        row_dx_[r] = opts_.dx * scale;
    }

    east_.resize(h * w);
    west_.resize(h * w);
    north_.resize(h * w);
    south_.resize(h * w);
    auto resolve = [&](std::size_t self, long r, long c) -> std::uint32_t {
        const long H = static_cast<long>(h), W = static_cast<long>(w);
        if (c < 0 || c >= W) {
            if (opts_.boundary_x == Boundary::reflective) return static_cast<std::uint32_t>(self);
            c = (c + W) % W;
        }
        if (r < 0 || r >= H) {
            if (opts_.boundary_y == Boundary::reflective) return static_cast<std::uint32_t>(self);
            r = (r + H) % H;
        }
        const std::size_t n = index(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        return static_cast<std::uint32_t>(opts_.mask[n] ? n : self);
    };
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::size_t i = index(r, c);
            const long lr = static_cast<long>(r), lc = static_cast<long>(c);
            east_[i] = resolve(i, lr, lc + 1);
            west_[i] = resolve(i, lr, lc - 1);
            north_[i] = resolve(i, lr + 1, lc);
            south_[i] = resolve(i, lr - 1, lc);
        }
    }
}

std::shared_ptr<const GridSpec> GridSpec::create(GridOptions opts) {
    return std::make_shared<const GridSpec>(std::move(opts));
}

std::shared_ptr<const GridSpec> GridSpec::global(std::size_t height, std::size_t width,
                                                 std::vector<std::uint8_t> mask) {
    GridOptions o;
    o.height = height;
    o.width = width;
    o.mask = std::move(mask);
    return create(std::move(o));
}

std::vector<std::uint8_t> GridSpec::coastal_cells() const {
    std::vector<std::uint8_t> out(cells(), 0);
    const long H = static_cast<long>(height()), W = static_cast<long>(width());
    for (long r = 0; r < H; ++r) {
        for (long c = 0; c < W; ++c) {
            const std::size_t i = index(r, c);
            if (!ocean(i)) continue;
            for (long dr = -1; dr <= 1 && !out[i]; ++dr) {
                for (long dc = -1; dc <= 1; ++dc) {
                    long rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= H) continue;
                    if (cc < 0 || cc >= W) {
                        if (opts_.boundary_x == Boundary::reflective) continue;
                        cc = (cc + W) % W;
                    }
                    if (!ocean(index(rr, cc))) {
                        out[i] = 1;
                        break;
                    }
                }
            }
        }
    }
    return out;
}

bool compatible(const GridSpec& a, const GridSpec& b) {
    return &a == &b || (a.height() == b.height() && a.width() == b.width() && a.mask() == b.mask() &&
                        a.dx() == b.dx() && a.dy() == b.dy() && a.boundary_x() == b.boundary_x() &&
                        a.boundary_y() == b.boundary_y() && a.cos_lat_metric() == b.cos_lat_metric());
}

ScalarField::ScalarField(GridPtr g, double fill) : grid(std::move(g)), values(grid->cells(), fill) {}

ScalarField::ScalarField(GridPtr g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    check_field(*this);
}

VectorField::VectorField(GridPtr g, double fill_u, double fill_v)
    : grid(std::move(g)), u(grid->cells(), fill_u), v(grid->cells(), fill_v) {}

void Trajectory::push(double t, std::vector<double> frame) {
    require(grid && frame.size() == grid->cells(), ErrorCode::ShapeMismatch, "trajectory frame does not match grid");
    times.push_back(t);
    frames.push_back(std::move(frame));
}

namespace stencil {

void grad_x(const GridSpec& g, std::span<const double> f, std::span<double> out) {
    const auto e = g.east(), w = g.west();
    const std::size_t W = g.width();
    for (std::size_t r = 0; r < g.height(); ++r) {
        const double c = 0.5 / g.dx_at(r);
        for (std::size_t i = r * W; i < (r + 1) * W; ++i)
            out[i] = g.ocean(i) ? c * (f[e[i]] - f[w[i]]) : 0.0;
    }
}

void grad_y(const GridSpec& g, std::span<const double> f, std::span<double> out) {
    const auto n = g.north(), s = g.south();
    const double c = 0.5 / g.dy();
    for (std::size_t i = 0; i < g.cells(); ++i) out[i] = g.ocean(i) ? c * (f[n[i]] - f[s[i]]) : 0.0;
}

void laplacian(const GridSpec& g, std::span<const double> f, std::span<double> out) {
    const auto e = g.east(), w = g.west(), n = g.north(), s = g.south();
    const std::size_t W = g.width();
    const double cy = 1.0 / (g.dy() * g.dy());
    for (std::size_t r = 0; r < g.height(); ++r) {
        const double cx = 1.0 / (g.dx_at(r) * g.dx_at(r));
        for (std::size_t i = r * W; i < (r + 1) * W; ++i) {
            if (!g.ocean(i)) {
                out[i] = 0.0;
                continue;
            }
            const double fc = f[i];
            out[i] = cx * (f[e[i]] + f[w[i]] - 2.0 * fc) + cy * (f[n[i]] + f[s[i]] - 2.0 * fc);
        }
    }
}

void grad_x_adjoint(const GridSpec& g, std::span<const double> go, std::span<double> gi) {
    const auto e = g.east(), w = g.west();
    const std::size_t W = g.width();
    for (std::size_t r = 0; r < g.height(); ++r) {
        const double c = 0.5 / g.dx_at(r);
        for (std::size_t i = r * W; i < (r + 1) * W; ++i) {
            if (!g.ocean(i)) continue;
            gi[e[i]] += c * go[i];
            gi[w[i]] -= c * go[i];
        }
    }
}

void grad_y_adjoint(const GridSpec& g, std::span<const double> go, std::span<double> gi) {
    const auto n = g.north(), s = g.south();
    const double c = 0.5 / g.dy();
    for (std::size_t i = 0; i < g.cells(); ++i) {
        if (!g.ocean(i)) continue;
        gi[n[i]] += c * go[i];
        gi[s[i]] -= c * go[i];
    }
}

void laplacian_adjoint(const GridSpec& g, std::span<const double> go, std::span<double> gi) {
    const auto e = g.east(), w = g.west(), n = g.north(), s = g.south();
    const std::size_t W = g.width();
    const double cy = 1.0 / (g.dy() * g.dy());
    for (std::size_t r = 0; r < g.height(); ++r) {
        const double cx = 1.0 / (g.dx_at(r) * g.dx_at(r));
        for (std::size_t i = r * W; i < (r + 1) * W; ++i) {
            if (!g.ocean(i)) continue;
            const double v = go[i];
            gi[e[i]] += cx * v;
            gi[w[i]] += cx * v;
            gi[n[i]] += cy * v;
            gi[s[i]] += cy * v;
            gi[i] -= 2.0 * (cx + cy) * v;
        }
    }
}

void apply_mask(const GridSpec& g, std::span<double> f) {
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (!g.ocean(i)) f[i] = 0.0;
}

} // namespace stencil

std::pair<ScalarField, ScalarField> gradient(const ScalarField& f) {
    check_field(f);
    check_finite(f, "gradient");
    ScalarField gx(f.grid), gy(f.grid);
    stencil::grad_x(*f.grid, f.values, gx.values);
    stencil::grad_y(*f.grid, f.values, gy.values);
    return {std::move(gx), std::move(gy)};
}

ScalarField laplacian(const ScalarField& f) {
    check_field(f);
    check_finite(f, "laplacian");
    ScalarField out(f.grid);
    stencil::laplacian(*f.grid, f.values, out.values);
    return out;
}

ScalarField advection_term(const ScalarField& f, const VectorField& vel) {
    check_field(f);
    require(vel.grid && compatible(*vel.grid, *f.grid) && vel.u.size() == f.values.size() &&
                vel.v.size() == f.values.size(),
            ErrorCode::ShapeMismatch, "advection_term: velocity does not match field grid");
    auto [gx, gy] = gradient(f);
    ScalarField out(f.grid);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = f.grid->ocean(i) ? -(vel.u[i] * gx.values[i] + vel.v[i] * gy.values[i]) : 0.0;
    return out;
}

ScalarField diffusion_term(const ScalarField& f, double kappa) {
    require(kappa > 0 && std::isfinite(kappa), ErrorCode::NonPositiveKappa,
            "diffusion_term: kappa must be positive, got " + std::to_string(kappa));
    ScalarField out = laplacian(f);
    for (auto& v : out.values) v *= kappa;
    return out;
}

RegionIndices region_indices(const GridSpec& g, const RegionBox& box) {
    require(box.lat_min < box.lat_max, ErrorCode::OutOfBounds, "empty latitude range");
    require(box.lon_min != box.lon_max, ErrorCode::OutOfBounds, "empty longitude range");
    const double grid_lat_lo = g.lat_deg(0) - 0.5 * g.lat_step_deg();
    const double grid_lat_hi = g.lat_deg(g.height() - 1) + 0.5 * g.lat_step_deg();
    require(box.lat_min >= grid_lat_lo - 1e-9 && box.lat_max <= grid_lat_hi + 1e-9, ErrorCode::OutOfBounds,
            "latitude range outside grid extent");

    RegionIndices idx;
    for (std::size_t r = 0; r < g.height(); ++r) {
        const double lat = g.lat_deg(r);
        if (lat >= box.lat_min && lat <= box.lat_max) idx.rows.push_back(r);
    }

    const double span_lon = g.lon_step_deg() * static_cast<double>(g.width());
    if (box.lon_max - box.lon_min >= span_lon - 1e-9) {
        for (std::size_t c = 0; c < g.width(); ++c) idx.cols.push_back(c);
    } else {
        const double west = wrap_lon(box.lon_min);
        double extent = wrap_lon(box.lon_max) - west;
        if (extent <= 0) extent += 360.0;
        // Walk eastward from the west edge so wrapped boxes come out contiguous.
        std::vector<std::pair<double, std::size_t>> picked;
        for (std::size_t c = 0; c < g.width(); ++c) {
            const double off = wrap_lon(g.lon_deg(c) - west);
            if (off <= extent) picked.emplace_back(off, c);
        }
        std::sort(picked.begin(), picked.end());
        for (auto& [off, c] : picked) idx.cols.push_back(c);
    }
    require(!idx.rows.empty() && !idx.cols.empty(), ErrorCode::OutOfBounds, "region selects no grid cells");
    return idx;
}

GridPtr crop_grid(const GridSpec& g, const RegionIndices& idx) {
    require(idx.rows.size() >= 1 && idx.cols.size() >= 1, ErrorCode::OutOfBounds, "empty crop");
    GridOptions o = g.options();
    o.height = idx.rows.size();
    o.width = idx.cols.size();
    const bool full_x = idx.cols.size() == g.width() && idx.cols.front() == 0;
    const bool full_y = idx.rows.size() == g.height();
    if (!full_x) o.boundary_x = Boundary::reflective;
    if (!full_y) o.boundary_y = Boundary::reflective;
    o.lat_origin_deg = g.lat_deg(idx.rows.front()) - 0.5 * g.lat_step_deg();
    o.lon_origin_deg = g.lon_deg(idx.cols.front()) - 0.5 * g.lon_step_deg();
    o.region_crop = true;
    o.mask.clear();
    for (auto r : idx.rows)
        for (auto c : idx.cols) o.mask.push_back(g.mask()[g.index(r, c)]);
    return GridSpec::create(std::move(o));
}

ScalarField crop_region(const ScalarField& f, const RegionBox& box) {
    check_field(f);
    const auto idx = region_indices(*f.grid, box);
    auto sub = crop_grid(*f.grid, idx);
    ScalarField out(sub);
    std::size_t k = 0;
    for (auto r : idx.rows)
        for (auto c : idx.cols) out.values[k++] = f.values[f.grid->index(r, c)];
    return out;
}

} // namespace sstode
