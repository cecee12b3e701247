#pragma once

#include <cstdint>
#include <string>

#include "sstode/autodiff.hpp"
#include "sstode/grid.hpp"

namespace sstode::nn {

enum class Activation { silu, relu };

struct TrunkConfig {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t hidden = 32;
    std::size_t blocks = 2;
    /// Side length of the pooled grid for the self-attention layer; 0 disables attention.
    std::size_t attention_pool = 0;
    Activation activation = Activation::silu;
};

/// 1x1 input projection, residual 3x3 conv blocks, optional single-head self
/// attention over an adaptively pooled grid, then a 1x1 output head. The head
/// is zero-initialized, so a fresh trunk outputs exactly 0. Land cells are
/// zeroed after every block.
class ConvTrunk {
public:
    ConvTrunk(TrunkConfig cfg, std::string prefix);

    void init(ad::ParamSet& params, std::uint64_t seed) const;
    ad::Var forward(ad::Tape& tape, ad::ParamSet& params, const GridSpec& g, const ad::Var& input) const;

    const TrunkConfig& config() const noexcept { return cfg_; }
    const std::string& prefix() const noexcept { return prefix_; }

private:
    ad::Var conv(ad::Tape& tape, ad::ParamSet& params, const std::string& name, const ad::Var& x) const;
    ad::Var act(const ad::Var& x) const;
    ad::Var attention(ad::Tape& tape, ad::ParamSet& params, const GridSpec& g, const ad::Var& x) const;

    TrunkConfig cfg_;
    std::string prefix_;
};

/// Velocity dynamics network: (V, Y, grad Y, phi) -> dV/dt.
class VelocityNet {
public:
    static constexpr std::size_t kInputChannels = 2 + 1 + 2 + 36;

    VelocityNet(std::size_t hidden = 32, std::size_t blocks = 2, std::size_t attention_pool = 8,
                std::string prefix = "fv");

    void init(ad::ParamSet& params, std::uint64_t seed) const { trunk_.init(params, seed); }
    /// velocity [2,H,W], sst [1,H,W], sst_grad [2,H,W], embed [36,H,W] -> [2,H,W].
    ad::Var forward(ad::Tape& tape, ad::ParamSet& params, const GridSpec& g, const ad::Var& velocity,
                    const ad::Var& sst, const ad::Var& sst_grad, const ad::Var& embed) const;

    const ConvTrunk& trunk() const noexcept { return trunk_; }

private:
    ConvTrunk trunk_;
};

/// Source network of the energy-exchange correction: (H(t0), Y_k, phi_k) -> Q_k.
class SourceNet {
public:
    static constexpr std::size_t kInputChannels = 4 + 1 + 36;

    SourceNet(std::size_t hidden = 32, std::size_t blocks = 2, std::string prefix = "fs");

    void init(ad::ParamSet& params, std::uint64_t seed) const { trunk_.init(params, seed); }
    /// forcing [4,H,W], sst [1,H,W], embed [36,H,W] -> [1,H,W].
    ad::Var forward(ad::Tape& tape, ad::ParamSet& params, const GridSpec& g, const ad::Var& forcing,
                    const ad::Var& sst, const ad::Var& embed) const;

    const ConvTrunk& trunk() const noexcept { return trunk_; }

private:
    ConvTrunk trunk_;
};

} // namespace sstode::nn
