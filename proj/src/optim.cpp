#include "sstode/optim.hpp"

#include <cmath>
#include <numbers>

#include "sstode/errors.hpp"

namespace sstode {

double softplus_pos(double raw) {
    if (raw > 30.0) return raw;
    if (raw < -30.0) return std::exp(raw);
    return std::log1p(std::exp(raw));
}

double softplus_inverse(double y) {
    require(y > 0, ErrorCode::InvalidArgument, "softplus_inverse: argument must be positive");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

namespace ad {

double AdamState::current_lr() const {
    if (!schedule) return lr;
    const std::size_t warm = std::min(schedule->warmup_steps, schedule->total_steps);
    if (steps < warm) return lr * static_cast<double>(steps + 1) / static_cast<double>(warm);
    const double total = static_cast<double>(std::max<std::size_t>(schedule->total_steps - warm, 1));
    const double progress = std::min(1.0, static_cast<double>(steps - warm) / total);
    const double min_lr = lr * schedule->min_ratio;
    return min_lr + (lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_step(ParamSet& params, AdamState& s) {
    require(params.grads_populated(), ErrorCode::EmptyGrads, "adam_step: no gradients (backward never ran)");
    const double lr = s.current_lr();
    ++s.steps;
    const double t = static_cast<double>(s.steps);
    const double bc1 = 1.0 - std::pow(s.beta1, t);
    const double bc2 = 1.0 - std::pow(s.beta2, t);
    for (auto& [name, e] : params.entries()) {
        auto& m = s.m[name];
        auto& v = s.v[name];
        if (m.shape() != e.value.shape()) m = Tensor(e.value.shape(), 0.0);
        if (v.shape() != e.value.shape()) v = Tensor(e.value.shape(), 0.0);
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            double g = e.grad[i];
            if (s.weight_decay != 0.0 && !s.decoupled) g += s.weight_decay * e.value[i];
            m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
            v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            if (s.weight_decay != 0.0 && s.decoupled) e.value[i] -= lr * s.weight_decay * e.value[i];
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
    ++params.step;
}

} // namespace ad
} // namespace sstode
