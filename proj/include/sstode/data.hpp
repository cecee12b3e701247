#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sstode/grid.hpp"
#include "sstode/tensor.hpp"

namespace sstode {

/// Forcing channels in serialization order.
inline constexpr std::array<const char*, 4> kFluxNames{"sw", "lw", "lhf", "shf"};
inline constexpr const char* kSstName = "sst";

struct Normalization {
    double mean = 0.0;
    double std = 1.0;

    double apply(double x) const { return (x - mean) / std; }
    double invert(double z) const { return z * std + mean; }
};

/// Inclusive timestamp range in hours.
struct TimeRange {
    double begin = 0.0;
    double end = -1.0;

    bool contains(double t) const { return t >= begin && t <= end; }
    bool empty() const { return end < begin; }
};

enum class Split { train, val, test };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct Splits {
    TimeRange train, val, test;
    const TimeRange& get(Split s) const;
};

/// Gridded variables on a shared grid and time axis.
struct Dataset {
    GridPtr grid;
    double cadence_hours = 6.0;
    std::map<std::string, Trajectory> variables;
    std::map<std::string, Normalization> normalization;
    Splits splits;
    bool standardized = false;
    /// Optional H*W orography (raw units); empty when unknown.
    std::vector<double> orography;

    const Trajectory& sst() const { return variable(kSstName); }
    const Trajectory& variable(const std::string& name) const;
    bool has_forcing() const;
    std::size_t length() const { return sst().size(); }
    /// Snapshot indices whose timestamps fall inside a split.
    std::vector<std::size_t> split_indices(Split s) const;
};

/// Mean / population std over ocean cells of the frames in `indices`.
/// A (near) constant series gets std = 1.
Normalization compute_normalization(const Trajectory& traj, const std::vector<std::size_t>& indices);

/// Standardizes every variable in place with train-split statistics (or the
/// statistics already present in ds.normalization). Land cells stay 0.
void standardize(Dataset& ds);
/// Inverse of standardize.
void unstandardize(Dataset& ds);

enum class DType { f32, f64 };

struct LoadOptions {
    /// Standardize raw data on load (stored normalization if present, else train-split statistics).
    bool standardize = true;
};

/// Writes `<path>` (JSON manifest) plus one blob per variable next to it.
void save_dataset(const Dataset& ds, const std::filesystem::path& manifest_path, DType dtype = DType::f64);
Dataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& opts = {});

/// One training/evaluation sample: p inputs, q targets, forcing at t0.
struct Window {
    std::size_t start = 0;  // index of the first input snapshot
    std::vector<double> input_times;
    std::vector<std::vector<double>> inputs;
    std::vector<double> target_times;
    std::vector<std::vector<double>> targets;
    /// [4,H,W] fluxes at t0 in channel order (zeros when the dataset has none).
    Tensor forcing;

    double t0() const { return input_times.back(); }
    Trajectory history(const GridPtr& grid) const;
};

/// Stride-1 sliding windows that stay inside one split.
std::vector<Window> make_windows(const Dataset& ds, std::size_t p, std::size_t q, Split split);

/// Keeps every `factor`-th snapshot (cadence multiplied accordingly).
Dataset subsample(const Dataset& ds, std::size_t factor);

enum class SyntheticKind { diffusion, advection, advdiff, advdiff_forced };
const char* to_string(SyntheticKind k);
SyntheticKind parse_synthetic_kind(const std::string& s);

/// Rectangular land block [row0, row1) x [col0, col1).
struct Continent {
    std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;
};

enum class InitialCondition {
    modes,    ///< seeded sum of low-wavenumber modes
    sin_mode  ///< single zonal sine mode with wavenumber mode_k (times a meridional cosine when mode_l > 0)
};

struct SyntheticParams {
    SyntheticKind kind = SyntheticKind::advdiff;
    std::size_t height = 32;
    std::size_t width = 64;
    Boundary boundary_y = Boundary::reflective;
    double kappa = 0.2;
    double u = 0.5;
    double v = -0.3;
    /// Diurnal source amplitude A of the forced kind.
    double source_amplitude = 1.0;
    /// Forcing files carry SW = Q* / flux_scale.
    double flux_scale = 1.0;
    double cadence_hours = 6.0;
    std::size_t length = 40;
    double t_start = 0.0;
    /// Internal steps per cadence interval.
    std::size_t substeps = 100;
    InitialCondition initial = InitialCondition::modes;
    std::size_t mode_k = 1;
    std::size_t mode_l = 0;
    /// Highest wavenumber of the seeded modes.
    std::size_t max_wavenumber = 2;
    std::vector<Continent> continents;
    /// Amplitude of a cold band along coastlines (0 disables).
    double coastal_anomaly = 0.0;
    /// e-folding distance of the coastal band in cells.
    double coastal_width = 1.0;
    /// Fractions of the snapshots assigned to train / val; the rest is test.
    double train_fraction = 0.6;
    double val_fraction = 0.2;
};

/// Spatial profile g(s) of the diurnal source: cos(latitude).
std::vector<double> source_profile(const GridSpec& g);

/// Integrates the discrete advection-diffusion operators with RK4 at
/// cadence/substeps; raw (unstandardized) output. The forced kind adds
/// A sin(2 pi t / 24) g(s) to every snapshot and emits SW = that / flux_scale.
Dataset gen_synthetic(const SyntheticParams& params, std::uint64_t seed);

} // namespace sstode
