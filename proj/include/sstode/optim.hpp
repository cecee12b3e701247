#pragma once

#include <map>
#include <optional>
#include <string>

#include "sstode/autodiff.hpp"

namespace sstode {

/// log(1 + exp(raw)), returning raw itself above 30 so large inputs never overflow.
double softplus_pos(double raw);
/// Inverse of softplus_pos for y > 0.
double softplus_inverse(double y);

namespace ad {

/// Optional linear warmup over warmup_steps, then cosine decay from the base
/// learning rate to base * min_ratio at total_steps.
struct CosineSchedule {
    std::size_t total_steps = 1;
    double min_ratio = 0.0;
    std::size_t warmup_steps = 0;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    /// AdamW: weight decay applied directly to the parameters instead of the gradient.
    bool decoupled = false;
    std::optional<CosineSchedule> schedule;
    std::size_t steps = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;

    /// Learning rate the next step will use.
    double current_lr() const;
};

/// One Adam/AdamW update of every parameter from its grad slot.
void adam_step(ParamSet& params, AdamState& state);

} // namespace ad
} // namespace sstode
