#include "sstode/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sstode/errors.hpp"

namespace sstode {

namespace {
constexpr double kDomainSlack = 1e-9;
}

SplineFit::SplineFit(GridPtr grid, std::vector<double> knots, std::vector<double> coeffs)
    : grid_(std::move(grid)), knots_(std::move(knots)), coeffs_(std::move(coeffs)) {
    require(knots_.size() >= 2 && coeffs_.size() == (knots_.size() - 1) * grid_->cells() * 4,
            ErrorCode::ShapeMismatch, "spline coefficient table does not match knots and grid");
}

std::size_t SplineFit::interval(double t) const {
    const double lo = knots_.front(), hi = knots_.back();
    const double slack = kDomainSlack * std::max(1.0, hi - lo);
    if (!(t >= lo - slack && t <= hi + slack))
        throw Error(ErrorCode::OutOfDomain, "t=" + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                                std::to_string(hi) + "]");
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    std::size_t k = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
    return std::min(k, knots_.size() - 2);
}

double SplineFit::value(std::size_t cell, double t) const {
    const std::size_t k = interval(t);
    const double* c = coeffs(k, cell);
    const double s = t - knots_[k];
    return c[0] + s * (c[1] + s * (c[2] + s * c[3]));
}

double SplineFit::derivative(std::size_t cell, double t) const {
    const std::size_t k = interval(t);
    const double* c = coeffs(k, cell);
    const double s = t - knots_[k];
    return c[1] + s * (2.0 * c[2] + 3.0 * s * c[3]);
}

double SplineFit::second_derivative(std::size_t cell, double t) const {
    const std::size_t k = interval(t);
    const double* c = coeffs(k, cell);
    const double s = t - knots_[k];
    return 2.0 * c[2] + 6.0 * s * c[3];
}

SplineFit fit_spline(const Trajectory& series) {
    const std::size_t p = series.size();
    require(p >= 3, ErrorCode::TooFewKnots, "cubic spline needs at least 3 snapshots, got " + std::to_string(p));
    require(series.grid != nullptr && series.times.size() == p, ErrorCode::ShapeMismatch,
            "trajectory timestamps do not match frames");
    for (std::size_t k = 1; k < p; ++k)
        require(series.times[k] > series.times[k - 1], ErrorCode::NonMonotonicTimestamps,
                "timestamps must be strictly increasing");
    const auto& g = *series.grid;
    const std::size_t n = g.cells();
    for (const auto& f : series.frames)
        require(f.size() == n, ErrorCode::ShapeMismatch, "trajectory frame does not match grid");

    std::vector<double> h(p - 1);
    for (std::size_t k = 0; k + 1 < p; ++k) h[k] = series.times[k + 1] - series.times[k];

    // Interior second derivatives solve a tridiagonal system that only depends on
    // the knots; eliminate once (Thomas) and reuse the factors for every cell.
    const std::size_t m = p - 2;
    std::vector<double> diag(m), lower(m), upper(m), cprime(m), denom(m);
    for (std::size_t j = 0; j < m; ++j) {
        lower[j] = h[j];
        diag[j] = 2.0 * (h[j] + h[j + 1]);
        upper[j] = h[j + 1];
    }
    for (std::size_t j = 0; j < m; ++j) {
        denom[j] = diag[j] - (j ? lower[j] * cprime[j - 1] : 0.0);
        cprime[j] = upper[j] / denom[j];
    }

    std::vector<double> coeffs((p - 1) * n * 4, 0.0);
    std::vector<double> y(p), M(p), rhs(m);
    for (std::size_t cell = 0; cell < n; ++cell) {
        if (!g.ocean(cell)) continue;
        for (std::size_t k = 0; k < p; ++k) y[k] = series.frames[k][cell];
        for (std::size_t j = 0; j < m; ++j)
            rhs[j] = 6.0 * ((y[j + 2] - y[j + 1]) / h[j + 1] - (y[j + 1] - y[j]) / h[j]);
        for (std::size_t j = 0; j < m; ++j) rhs[j] = (rhs[j] - (j ? lower[j] * rhs[j - 1] : 0.0)) / denom[j];
        M.assign(p, 0.0);
        for (std::size_t j = m; j-- > 0;) M[j + 1] = rhs[j] - (j + 1 < m ? cprime[j] * M[j + 2] : 0.0);
        for (std::size_t k = 0; k + 1 < p; ++k) {
            double* c = coeffs.data() + (k * n + cell) * 4;
            c[0] = y[k];
            c[1] = (y[k + 1] - y[k]) / h[k] - h[k] * (2.0 * M[k] + M[k + 1]) / 6.0;
            c[2] = 0.5 * M[k];
            c[3] = (M[k + 1] - M[k]) / (6.0 * h[k]);
        }
    }
    return SplineFit(series.grid, series.times, std::move(coeffs));
}

ScalarField derivative_at(const SplineFit& fit, double t) {
    ScalarField out(fit.grid());
    const auto& g = *fit.grid();
    for (std::size_t cell = 0; cell < g.cells(); ++cell) out.values[cell] = g.ocean(cell) ? fit.derivative(cell, t) : 0.0;
    if (g.ocean_count() == 0) (void)fit.derivative(0, t);  // still validates the domain
    return out;
}

} // namespace sstode
