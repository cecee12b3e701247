#include "sstode/eei.hpp"

#include <sstream>

#include "sstode/data.hpp"
#include "sstode/errors.hpp"
#include "sstode/optim.hpp"

namespace sstode {

ForcingStack::ForcingStack(GridPtr g, double time) : grid(std::move(g)), t(time) {
    for (auto& c : channels) c.assign(grid->cells(), 0.0);
}

Tensor ForcingStack::tensor() const {
    const std::size_t n = grid->cells();
    Tensor out({4, grid->height(), grid->width()});
    for (std::size_t c = 0; c < 4; ++c) {
        require(channels[c].size() == n, ErrorCode::ShapeMismatch, "forcing channel does not match grid");
        std::copy(channels[c].begin(), channels[c].end(), out.vec().begin() + static_cast<std::ptrdiff_t>(c * n));
    }
    return out;
}

ForcingStack ForcingStack::from_tensor(GridPtr g, const Tensor& t, double time) {
    require(t.shape() == Shape{4, g->height(), g->width()}, ErrorCode::ShapeMismatch,
            "forcing tensor must be [4,H,W], got " + shape_string(t.shape()));
    ForcingStack s(g, time);
    const std::size_t n = g->cells();
    for (std::size_t c = 0; c < 4; ++c)
        std::copy(t.vec().begin() + static_cast<std::ptrdiff_t>(c * n),
                  t.vec().begin() + static_cast<std::ptrdiff_t>((c + 1) * n), s.channels[c].begin());
    return s;
}

FluxSubset FluxSubset::parse(const std::string& s) {
    if (s == "all") return all();
    if (s == "none" || s.empty()) return none();
    FluxSubset out = none();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        bool found = false;
        for (std::size_t c = 0; c < kFluxNames.size(); ++c)
            if (item == kFluxNames[c]) {
                out.on[c] = true;
                found = true;
            }
        require(found, ErrorCode::InvalidArgument, "unknown flux '" + item + "' (sw|lw|lhf|shf)");
    }
    return out;
}

std::string FluxSubset::to_string() const {
    if (*this == all()) return "all";
    if (!enabled()) return "none";
    std::string out;
    for (std::size_t c = 0; c < 4; ++c)
        if (on[c]) out += (out.empty() ? "" : ",") + std::string(kFluxNames[c]);
    return out;
}

ScalarField qnet_scale(const ForcingStack& stack, double scale_raw) {
    const double s = softplus_pos(scale_raw);
    ScalarField out(stack.grid);
    const GridSpec& g = *stack.grid;
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (g.ocean(i))
            out.values[i] = (stack.channels[0][i] + stack.channels[1][i] + stack.channels[2][i] + stack.channels[3][i]) * s;
    return out;
}

ad::Var qnet_scale(const ad::Var& forcing, const ad::Var& scale_raw) {
    const Shape& s = forcing.shape();
    require(s.size() == 3 && s[0] == 4, ErrorCode::ShapeMismatch, "qnet_scale: forcing must be [4,H,W]");
    const ad::Var total = ad::slice_channels(forcing, 0, 1) + ad::slice_channels(forcing, 1, 2) +
                          ad::slice_channels(forcing, 2, 3) + ad::slice_channels(forcing, 3, 4);
    return ad::mul_scalar(total, ad::softplus(scale_raw));
}

ForcingStack flux_subset(const ForcingStack& stack, const FluxSubset& which) {
    ForcingStack out = stack;
    for (std::size_t c = 0; c < 4; ++c)
        if (!which.on[c]) std::fill(out.channels[c].begin(), out.channels[c].end(), 0.0);
    return out;
}

Tensor flux_subset(const Tensor& forcing, const FluxSubset& which) {
    require(forcing.rank() == 3 && forcing.dim(0) == 4, ErrorCode::ShapeMismatch, "flux_subset: forcing must be [4,H,W]");
    Tensor out = forcing;
    const std::size_t n = forcing.dim(1) * forcing.dim(2);
    for (std::size_t c = 0; c < 4; ++c)
        if (!which.on[c]) std::fill(out.vec().begin() + static_cast<std::ptrdiff_t>(c * n),
                                    out.vec().begin() + static_cast<std::ptrdiff_t>((c + 1) * n), 0.0);
    return out;
}

Trajectory estimate_source(const nn::SourceNet& net, ad::ParamSet& params, const ForcingStack& h0,
                           const Trajectory& forecasts, const std::vector<Tensor>& embeds) {
    require(embeds.size() == forecasts.size(), ErrorCode::LengthMismatch,
            "estimate_source: " + std::to_string(forecasts.size()) + " forecast steps but " +
                std::to_string(embeds.size()) + " embeddings");
    const GridSpec& g = *forecasts.grid;
    const Tensor forcing = h0.tensor();
    Trajectory out;
    out.grid = forecasts.grid;
    for (std::size_t k = 0; k < forecasts.size(); ++k) {
        ad::Tape tape;
        const ad::Var q = net.forward(tape, params, g, tape.constant(forcing),
                                      tape.constant(Tensor({1, g.height(), g.width()}, forecasts.frames[k])),
                                      tape.constant(embeds[k]));
        out.push(forecasts.times[k], q.value().vec());
    }
    return out;
}

Trajectory apply_correction(const Trajectory& forecasts, const Trajectory& sources) {
    require(forecasts.size() == sources.size(), ErrorCode::LengthMismatch,
            "apply_correction: trajectories have different lengths");
    const GridSpec& g = *forecasts.grid;
    Trajectory out = forecasts;
    for (std::size_t k = 0; k < out.size(); ++k) {
        require(sources.frames[k].size() == g.cells(), ErrorCode::ShapeMismatch, "apply_correction: frame size mismatch");
        for (std::size_t i = 0; i < g.cells(); ++i)
            out.frames[k][i] = g.ocean(i) ? out.frames[k][i] + sources.frames[k][i] : 0.0;
    }
    return out;
}

} // namespace sstode
