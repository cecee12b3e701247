#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sstode/autodiff.hpp"

namespace sstode::ad {

struct GradcheckOptions {
    double h = 1e-4;
    double rtol = 1e-4;
    /// Entries larger than this are checked on a seeded random subset of coordinates.
    std::size_t max_coords = 256;
    std::uint64_t seed = 0;
};

struct EntryCheck {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradcheckReport {
    std::vector<EntryCheck> entries;
    double max_rel_error = 0.0;
    bool passed = false;
};

using LossFn = std::function<Var(Tape&, ParamSet&)>;

/// Compares reverse-mode gradients with central differences (f(p+h) - f(p-h)) / 2h.
///
/// Per coordinate the error is |a - n| / max(|a|, |n|, floor), where floor is
/// 1e-3 times the largest central-difference magnitude within the same entry
/// (and at least 1e-8), so coordinates whose gradient is negligible relative to
/// their entry are held to an absolute rather than relative bound.
GradcheckReport gradcheck(const LossFn& f, ParamSet& params, const GradcheckOptions& opts = {});

} // namespace sstode::ad
