#pragma once

#include <vector>

#include "sstode/grid.hpp"

namespace sstode {

/// Natural cubic spline fitted independently through every ocean cell's time series.
///
/// On interval k the cell's polynomial is a + b*s + c*s^2 + d*s^3 with s = t - knots[k].
class SplineFit {
public:
    SplineFit(GridPtr grid, std::vector<double> knots, std::vector<double> coeffs);

    const std::vector<double>& knots() const noexcept { return knots_; }
    const GridPtr& grid() const noexcept { return grid_; }

    double value(std::size_t cell, double t) const;
    double derivative(std::size_t cell, double t) const;
    double second_derivative(std::size_t cell, double t) const;

private:
    std::size_t interval(double t) const;
    const double* coeffs(std::size_t interval, std::size_t cell) const {
        return coeffs_.data() + (interval * grid_->cells() + cell) * 4;
    }

    GridPtr grid_;
    std::vector<double> knots_;
    std::vector<double> coeffs_;  // [interval][cell][4]
};

/// Needs at least 3 snapshots with strictly increasing timestamps.
SplineFit fit_spline(const Trajectory& series);

/// Analytic time derivative of the fit at t (hours); land cells are 0.
ScalarField derivative_at(const SplineFit& fit, double t);

} // namespace sstode
