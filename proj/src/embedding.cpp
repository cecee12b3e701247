#include "sstode/embedding.hpp"

#include <cmath>
#include <numbers>

#include "sstode/errors.hpp"

namespace sstode {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::pair<Tensor, Tensor> coordinate_planes(const GridSpec& g) {
    const std::size_t H = g.height(), W = g.width();
    Tensor lat({H, W}), lon({H, W});
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            lat[r * W + c] = g.lat_deg(r) * kDeg;
            lon[r * W + c] = g.lon_deg(c) * kDeg;
        }
    return {std::move(lat), std::move(lon)};
}

} // namespace

ad::Var spatial_embedding(const ad::Var& lat_rad, const ad::Var& lon_rad) {
    const Shape& s = lat_rad.shape();
    require(s.size() == 2 && lon_rad.shape() == s, ErrorCode::ShapeMismatch,
            "spatial_embedding: coordinates must be matching [H,W] planes");
    const Shape plane{1, s[0], s[1]};
    ad::Var coords = ad::concat({ad::reshape(lat_rad, plane), ad::reshape(lon_rad, plane),
                                 ad::reshape(ad::mul(lat_rad, lon_rad), plane)});
    return ad::concat({ad::sin(coords), ad::cos(coords)});
}

ad::Var temporal_embedding(const ad::Var& t_hours) {
    require(t_hours.value().size() == 1, ErrorCode::ShapeMismatch, "temporal_embedding: time must be a scalar");
    const double daily = 2.0 * std::numbers::pi / kHoursPerDay;
    const double yearly = daily / kDaysPerYear;
    ad::Var d = ad::scale(t_hours, daily);
    ad::Var y = ad::scale(t_hours, yearly);
    return ad::concat({ad::sin(d), ad::cos(d), ad::sin(y), ad::cos(y)});
}

ad::Var assemble_embedding(const ad::Var& spatial, const ad::Var& temporal, const ad::Var& lsm, const ad::Var& oro) {
    const Shape& s = spatial.shape();
    require(s.size() == 3 && s[0] == 6 && temporal.value().size() == 4, ErrorCode::ShapeMismatch,
            "assemble_embedding: expects 6 spatial and 4 temporal channels");
    const Shape plane{1, s[1], s[2]};
    require(lsm.value().size() == s[1] * s[2] && oro.value().size() == s[1] * s[2], ErrorCode::ShapeMismatch,
            "assemble_embedding: static fields do not match the grid");
    return ad::concat({spatial, ad::broadcast_planes(temporal, s[1], s[2]), ad::outer_channels(spatial, temporal),
                       ad::reshape(lsm, plane), ad::reshape(oro, plane)});
}

Tensor spatial_embedding(const GridSpec& g) {
    auto [lat, lon] = coordinate_planes(g);
    ad::Tape tape;
    return spatial_embedding(tape.constant(std::move(lat)), tape.constant(std::move(lon))).value();
}

std::array<double, 4> temporal_embedding(double t_hours) {
    ad::Tape tape;
    const Tensor v = temporal_embedding(tape.constant(Tensor::scalar(t_hours))).value();
    return {v[0], v[1], v[2], v[3]};
}

std::vector<double> standardize_orography(const GridSpec& g, const std::vector<double>& oro) {
    require(oro.size() == g.cells(), ErrorCode::ShapeMismatch, "orography does not match grid");
    // Ocean cells plus their land neighbors.
    std::vector<std::uint8_t> use(g.cells(), 0);
    for (std::size_t i = 0; i < g.cells(); ++i) {
        if (!g.ocean(i)) continue;
        use[i] = 1;
        const std::size_t r = i / g.width(), c = i % g.width();
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
                if (rr < 0 || cc < 0 || rr >= static_cast<long>(g.height()) || cc >= static_cast<long>(g.width()))
                    continue;
                use[g.index(rr, cc)] = 1;
            }
    }
    double n = 0, mean = 0;
    for (std::size_t i = 0; i < oro.size(); ++i)
        if (use[i]) {
            n += 1;
            mean += oro[i];
        }
    std::vector<double> out(oro.size(), 0.0);
    if (n == 0) return out;
    mean /= n;
    double var = 0;
    for (std::size_t i = 0; i < oro.size(); ++i)
        if (use[i]) var += (oro[i] - mean) * (oro[i] - mean);
    var /= n;
    if (var < 1e-12) return out;
    const double sd = std::sqrt(var);
    for (std::size_t i = 0; i < oro.size(); ++i) out[i] = (oro[i] - mean) / sd;
    return out;
}

Tensor build_embedding(const GridSpec& g, double t_hours, const std::vector<double>& lsm,
                       const std::vector<double>& oro) {
    require(lsm.size() == g.cells() && oro.size() == g.cells(), ErrorCode::ShapeMismatch,
            "build_embedding: lsm/oro do not match grid");
    auto [lat, lon] = coordinate_planes(g);
    const Shape plane{g.height(), g.width()};
    ad::Tape tape;
    ad::Var spatial = spatial_embedding(tape.constant(std::move(lat)), tape.constant(std::move(lon)));
    ad::Var temporal = temporal_embedding(tape.constant(Tensor::scalar(t_hours)));
    return assemble_embedding(spatial, temporal, tape.constant(Tensor(plane, lsm)),
                              tape.constant(Tensor(plane, standardize_orography(g, oro))))
        .value();
}

EmbeddingBuilder::EmbeddingBuilder(GridPtr grid, std::vector<double> oro) : grid_(std::move(grid)) {
    spatial_ = spatial_embedding(*grid_);
    lsm_.resize(grid_->cells());
    for (std::size_t i = 0; i < grid_->cells(); ++i) lsm_[i] = grid_->ocean(i) ? 1.0 : 0.0;
    if (oro.empty()) oro.assign(grid_->cells(), 0.0);
    oro_ = standardize_orography(*grid_, oro);
}

Tensor EmbeddingBuilder::build(double t_hours) const {
    const Shape plane{grid_->height(), grid_->width()};
    ad::Tape tape;
    ad::Var temporal = temporal_embedding(tape.constant(Tensor::scalar(t_hours)));
    return assemble_embedding(tape.constant(spatial_), temporal, tape.constant(Tensor(plane, lsm_)),
                              tape.constant(Tensor(plane, oro_)))
        .value();
}

} // namespace sstode
