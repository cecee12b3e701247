#pragma once

#include <array>
#include <vector>

#include "sstode/autodiff.hpp"
#include "sstode/grid.hpp"

namespace sstode {

/// Channel layout of the spatiotemporal embedding phi(s, t):
///   [0, 6)    spatial: sin(lat), sin(lon), sin(lat*lon), cos(lat), cos(lon), cos(lat*lon)
///   [6, 10)   temporal, broadcast: sin(2pi d), cos(2pi d), sin(2pi d/365), cos(2pi d/365), d = t/24
///   [10, 34)  interaction: plane 10 + 4*s + k = spatial[s] * temporal[k]
///   34        land-sea mask (ocean = 1)
///   35        standardized orography
namespace embedding_layout {
inline constexpr std::size_t spatial = 0;
inline constexpr std::size_t temporal = 6;
inline constexpr std::size_t interaction = 10;
inline constexpr std::size_t lsm = 34;
inline constexpr std::size_t oro = 35;
inline constexpr std::size_t channels = 36;
} // namespace embedding_layout

inline constexpr double kHoursPerDay = 24.0;
inline constexpr double kDaysPerYear = 365.0;

// Differentiable forms. Coordinates are radians; t is hours.
ad::Var spatial_embedding(const ad::Var& lat_rad, const ad::Var& lon_rad);
ad::Var temporal_embedding(const ad::Var& t_hours);
ad::Var assemble_embedding(const ad::Var& spatial, const ad::Var& temporal, const ad::Var& lsm, const ad::Var& oro);

/// [6, H, W] spatial channels of a grid.
Tensor spatial_embedding(const GridSpec& g);
std::array<double, 4> temporal_embedding(double t_hours);
/// [36, H, W]; lsm and oro must have H*W entries (oro is standardized here).
Tensor build_embedding(const GridSpec& g, double t_hours, const std::vector<double>& lsm,
                       const std::vector<double>& oro);

/// Zero mean / unit variance over ocean and ocean-adjacent cells; all zeros
/// when the variance is below 1e-12.
std::vector<double> standardize_orography(const GridSpec& g, const std::vector<double>& oro);

/// Caches the static channels of one grid and stamps out embeddings per time.
class EmbeddingBuilder {
public:
    explicit EmbeddingBuilder(GridPtr grid, std::vector<double> oro = {});

    Tensor build(double t_hours) const;
    const GridPtr& grid() const noexcept { return grid_; }

private:
    GridPtr grid_;
    Tensor spatial_;
    std::vector<double> lsm_;
    std::vector<double> oro_;
};

} // namespace sstode
