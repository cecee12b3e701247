#pragma once

#include <string>
#include <vector>

#include "sstode/gradcheck.hpp"

namespace sstode {

/// One named gradient check of the verification suite.
struct SuiteCheck {
    std::string name;
    ad::GradcheckReport report;
};

struct SuiteOptions {
    ad::GradcheckOptions grad;
    /// Grid side length of every check.
    std::size_t size = 8;
    /// Explicit Euler steps of the unrolled forecast check.
    std::size_t euler_steps = 3;
};

/// Gradient checks of every differentiable path: the velocity-estimation
/// objective, the full unrolled forecast loss, the velocity and source
/// networks, the embeddings, the metric losses and the flux-sum source.
/// Checks run on a small masked grid with seeded random parameters.
std::vector<SuiteCheck> run_gradcheck_suite(const SuiteOptions& opts = {});

/// True when every check passed.
bool all_passed(const std::vector<SuiteCheck>& checks);

} // namespace sstode
