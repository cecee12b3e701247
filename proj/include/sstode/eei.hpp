#pragma once

#include <array>
#include <string>
#include <vector>

#include "sstode/autodiff.hpp"
#include "sstode/grid.hpp"
#include "sstode/nn.hpp"

namespace sstode {

/// Surface heat fluxes at one time, channel order (SW, LW, LHF, SHF).
struct ForcingStack {
    GridPtr grid;
    std::array<std::vector<double>, 4> channels;
    double t = 0.0;

    ForcingStack() = default;
    ForcingStack(GridPtr g, double time);

    std::vector<double>& sw() { return channels[0]; }
    std::vector<double>& lw() { return channels[1]; }
    std::vector<double>& lhf() { return channels[2]; }
    std::vector<double>& shf() { return channels[3]; }

    /// [4,H,W] in channel order.
    Tensor tensor() const;
    static ForcingStack from_tensor(GridPtr g, const Tensor& t, double time);
};

/// Which flux channels feed the source network. An empty subset disables the
/// energy-exchange path altogether.
struct FluxSubset {
    std::array<bool, 4> on{true, true, true, true};

    bool enabled() const { return on[0] || on[1] || on[2] || on[3]; }
    static FluxSubset all() { return {}; }
    static FluxSubset none() { return {{false, false, false, false}}; }
    /// "all", "none", or a comma list such as "sw,lw".
    static FluxSubset parse(const std::string& s);
    std::string to_string() const;
    bool operator==(const FluxSubset&) const = default;
};

/// (sw + lw + lhf + shf) * softplus(scale_raw).
ScalarField qnet_scale(const ForcingStack& stack, double scale_raw);
ad::Var qnet_scale(const ad::Var& forcing, const ad::Var& scale_raw);

/// Zeroes the excluded channels; shape is kept so network weights stay compatible.
ForcingStack flux_subset(const ForcingStack& stack, const FluxSubset& which);
Tensor flux_subset(const Tensor& forcing, const FluxSubset& which);

/// Q_k = f_s(H0, Y_k, phi_k) for every forecast step.
Trajectory estimate_source(const nn::SourceNet& net, ad::ParamSet& params, const ForcingStack& h0,
                           const Trajectory& forecasts, const std::vector<Tensor>& embeds);

/// Y_k + Q_k per step; land cells stay 0.
Trajectory apply_correction(const Trajectory& forecasts, const Trajectory& sources);

} // namespace sstode
