#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace sstode {

enum class Boundary { periodic, reflective };

/// Construction parameters for a GridSpec. Rows index latitude (south to
/// north), columns index longitude (west to east).
struct GridOptions {
    std::size_t height = 0;
    std::size_t width = 0;
    double dx = 1.0;
    double dy = 1.0;
    Boundary boundary_x = Boundary::periodic;
    Boundary boundary_y = Boundary::reflective;
    /// H*W entries, 1 = ocean, 0 = land. Empty means all ocean.
    std::vector<std::uint8_t> mask;
    /// Cell-center latitude of row i is lat_origin_deg + (i + 0.5) * lat_step_deg.
    double lat_origin_deg = -90.0;
    double lat_step_deg = 0.0;  // 0 selects 180 / height
    double lon_origin_deg = 0.0;
    double lon_step_deg = 0.0;  // 0 selects 360 / width
    /// Scale dx by cos(latitude) per row.
    bool cos_lat_metric = false;
    /// Set on region crops: reflective edges make 1- and 2-cell extents valid.
    bool region_crop = false;
};

/// Masked rectangular lat-lon grid. Immutable once built; shared between fields.
///
/// Neighbor tables encode the boundary and coastline policy in one place: a
/// neighbor that falls outside a reflective edge, or onto land, resolves to the
/// center cell itself, so stencils see a zero-flux wall there.
class GridSpec {
public:
    explicit GridSpec(GridOptions opts);

    static std::shared_ptr<const GridSpec> create(GridOptions opts);
    static std::shared_ptr<const GridSpec> global(std::size_t height, std::size_t width,
                                                  std::vector<std::uint8_t> mask = {});

    std::size_t height() const noexcept { return opts_.height; }
    std::size_t width() const noexcept { return opts_.width; }
    std::size_t cells() const noexcept { return opts_.height * opts_.width; }
    std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * opts_.width + col; }

    double dx() const noexcept { return opts_.dx; }
    double dy() const noexcept { return opts_.dy; }
    /// Effective zonal spacing on a row (includes the optional cos-latitude metric).
    double dx_at(std::size_t row) const { return row_dx_[row]; }
    Boundary boundary_x() const noexcept { return opts_.boundary_x; }
    Boundary boundary_y() const noexcept { return opts_.boundary_y; }
    bool cos_lat_metric() const noexcept { return opts_.cos_lat_metric; }

    const std::vector<std::uint8_t>& mask() const noexcept { return opts_.mask; }
    bool ocean(std::size_t cell) const { return opts_.mask[cell] != 0; }
    std::size_t ocean_count() const noexcept { return ocean_count_; }
    bool fully_ocean() const noexcept { return ocean_count_ == cells(); }

    double lat_deg(std::size_t row) const { return opts_.lat_origin_deg + (row + 0.5) * opts_.lat_step_deg; }
    double lon_deg(std::size_t col) const { return opts_.lon_origin_deg + (col + 0.5) * opts_.lon_step_deg; }
    double lat_step_deg() const noexcept { return opts_.lat_step_deg; }
    double lon_step_deg() const noexcept { return opts_.lon_step_deg; }

    const GridOptions& options() const noexcept { return opts_; }

    std::span<const std::uint32_t> east() const noexcept { return east_; }
    std::span<const std::uint32_t> west() const noexcept { return west_; }
    std::span<const std::uint32_t> north() const noexcept { return north_; }
    std::span<const std::uint32_t> south() const noexcept { return south_; }

    /// Ocean cells with at least one land cell among their 8 neighbors.
    std::vector<std::uint8_t> coastal_cells() const;

private:
    GridOptions opts_;
    std::size_t ocean_count_ = 0;
    std::vector<double> row_dx_;
    std::vector<std::uint32_t> east_, west_, north_, south_;
};

using GridPtr = std::shared_ptr<const GridSpec>;

bool compatible(const GridSpec& a, const GridSpec& b);

struct ScalarField {
    GridPtr grid;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(GridPtr g, double fill = 0.0);
    ScalarField(GridPtr g, std::vector<double> v);

    double& operator()(std::size_t row, std::size_t col) { return values[grid->index(row, col)]; }
    double operator()(std::size_t row, std::size_t col) const { return values[grid->index(row, col)]; }
};

struct VectorField {
    GridPtr grid;
    std::vector<double> u;  // zonal
    std::vector<double> v;  // meridional

    VectorField() = default;
    explicit VectorField(GridPtr g, double fill_u = 0.0, double fill_v = 0.0);
};

/// Time-indexed sequence of fields on one grid. Times are in hours.
struct Trajectory {
    GridPtr grid;
    std::vector<double> times;
    std::vector<std::vector<double>> frames;

    std::size_t size() const noexcept { return frames.size(); }
    void push(double t, std::vector<double> frame);
    ScalarField field(std::size_t k) const { return ScalarField(grid, frames.at(k)); }
};

/// Raw stencil kernels on one H*W plane. Forward kernels overwrite `out`;
/// adjoint kernels accumulate into `grad_in`. Land cells produce 0.
namespace stencil {
void grad_x(const GridSpec& g, std::span<const double> f, std::span<double> out);
void grad_y(const GridSpec& g, std::span<const double> f, std::span<double> out);
void laplacian(const GridSpec& g, std::span<const double> f, std::span<double> out);
void grad_x_adjoint(const GridSpec& g, std::span<const double> grad_out, std::span<double> grad_in);
void grad_y_adjoint(const GridSpec& g, std::span<const double> grad_out, std::span<double> grad_in);
void laplacian_adjoint(const GridSpec& g, std::span<const double> grad_out, std::span<double> grad_in);
void apply_mask(const GridSpec& g, std::span<double> f);
} // namespace stencil

std::pair<ScalarField, ScalarField> gradient(const ScalarField& f);
ScalarField laplacian(const ScalarField& f);
/// -(Vx * df/dx + Vy * df/dy).
ScalarField advection_term(const ScalarField& f, const VectorField& vel);
ScalarField diffusion_term(const ScalarField& f, double kappa);

/// Latitude/longitude box in degrees. Longitudes may be given in [-180, 360);
/// a box whose east edge lies west of its west edge wraps through the dateline.
struct RegionBox {
    double lat_min = -90.0;
    double lat_max = 90.0;
    double lon_min = 0.0;
    double lon_max = 360.0;
};

/// Row and column indices (in output order) selected by a region box.
struct RegionIndices {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
};

RegionIndices region_indices(const GridSpec& g, const RegionBox& box);
/// Sub-grid for a region; every cropped edge becomes reflective.
GridPtr crop_grid(const GridSpec& g, const RegionIndices& idx);
ScalarField crop_region(const ScalarField& f, const RegionBox& box);

} // namespace sstode
