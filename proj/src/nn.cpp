#include "sstode/nn.hpp"

#include <cmath>
#include <random>

#include "sstode/errors.hpp"

namespace sstode::nn {

namespace {

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.vec()) v = dist(rng);
    return t;
}

void add_conv(ad::ParamSet& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
              double gain, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(cin * k * k);
    ps.add(name + ".w", normal_tensor({cout, cin, k, k}, gain / std::sqrt(fan_in), rng));
    ps.add(name + ".b", Tensor({cout}, 0.0));
}

} // namespace

ConvTrunk::ConvTrunk(TrunkConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
    require(cfg_.in_channels > 0 && cfg_.out_channels > 0 && cfg_.hidden > 0, ErrorCode::InvalidArgument,
            "conv trunk needs positive channel counts");
}

void ConvTrunk::init(ad::ParamSet& ps, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    const std::size_t C = cfg_.hidden;
    add_conv(ps, prefix_ + ".in", cfg_.in_channels, C, 1, 1.0, rng);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        const std::string blk = prefix_ + ".block" + std::to_string(b);
        add_conv(ps, blk + ".conv1", C, C, 3, std::sqrt(2.0), rng);
        // Small second conv keeps each block close to identity at start.
        add_conv(ps, blk + ".conv2", C, C, 3, 0.1, rng);
    }
    if (cfg_.attention_pool > 0) {
        const double s = 1.0 / std::sqrt(static_cast<double>(C));
        ps.add(prefix_ + ".attn.q", normal_tensor({C, C}, s, rng));
        ps.add(prefix_ + ".attn.k", normal_tensor({C, C}, s, rng));
        ps.add(prefix_ + ".attn.v", normal_tensor({C, C}, s, rng));
        ps.add(prefix_ + ".attn.o", normal_tensor({C, C}, 0.1 * s, rng));
    }
    ps.add(prefix_ + ".out.w", Tensor({cfg_.out_channels, C, 1, 1}, 0.0));
    ps.add(prefix_ + ".out.b", Tensor({cfg_.out_channels}, 0.0));
}

ad::Var ConvTrunk::conv(ad::Tape& tape, ad::ParamSet& ps, const std::string& name, const ad::Var& x) const {
    return ad::conv2d(x, tape.param(ps, name + ".w"), tape.param(ps, name + ".b"));
}

ad::Var ConvTrunk::act(const ad::Var& x) const {
    return cfg_.activation == Activation::relu ? ad::relu(x) : ad::silu(x);
}

ad::Var ConvTrunk::attention(ad::Tape& tape, ad::ParamSet& ps, const GridSpec& g, const ad::Var& x) const {
    const std::size_t C = cfg_.hidden;
    const std::size_t P = std::min(cfg_.attention_pool, g.height());
    const std::size_t Q = std::min(cfg_.attention_pool, g.width());
    ad::Var tokens = ad::transpose(ad::reshape(ad::avg_pool(x, P, Q), {C, P * Q}));  // [T, C]
    ad::Var q = ad::matmul(tokens, tape.param(ps, prefix_ + ".attn.q"));
    ad::Var k = ad::matmul(tokens, tape.param(ps, prefix_ + ".attn.k"));
    ad::Var v = ad::matmul(tokens, tape.param(ps, prefix_ + ".attn.v"));
    ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(C)));
    ad::Var mixed = ad::matmul(ad::matmul(ad::softmax_rows(scores), v), tape.param(ps, prefix_ + ".attn.o"));
    ad::Var back = ad::reshape(ad::transpose(mixed), {C, P, Q});
    return ad::apply_mask(ad::add(x, ad::upsample(back, g.height(), g.width())), g);
}

ad::Var ConvTrunk::forward(ad::Tape& tape, ad::ParamSet& ps, const GridSpec& g, const ad::Var& input) const {
    require(input.shape().size() == 3 && input.shape()[0] == cfg_.in_channels && input.shape()[1] == g.height() &&
                input.shape()[2] == g.width(),
            ErrorCode::ShapeMismatch, prefix_ + ": input " + shape_string(input.shape()) + " does not match trunk/grid");
    ad::Var h = ad::apply_mask(conv(tape, ps, prefix_ + ".in", input), g);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        const std::string blk = prefix_ + ".block" + std::to_string(b);
        ad::Var r = conv(tape, ps, blk + ".conv1", act(h));
        r = conv(tape, ps, blk + ".conv2", act(r));
        h = ad::apply_mask(ad::add(h, r), g);
    }
    if (cfg_.attention_pool > 0) h = attention(tape, ps, g, h);
    return ad::apply_mask(conv(tape, ps, prefix_ + ".out", act(h)), g);
}

VelocityNet::VelocityNet(std::size_t hidden, std::size_t blocks, std::size_t attention_pool, std::string prefix)
    : trunk_(TrunkConfig{kInputChannels, 2, hidden, blocks, attention_pool, Activation::silu}, std::move(prefix)) {}

ad::Var VelocityNet::forward(ad::Tape& tape, ad::ParamSet& ps, const GridSpec& g, const ad::Var& velocity,
                             const ad::Var& sst, const ad::Var& sst_grad, const ad::Var& embed) const {
    return trunk_.forward(tape, ps, g, ad::concat({velocity, sst, sst_grad, embed}));
}

SourceNet::SourceNet(std::size_t hidden, std::size_t blocks, std::string prefix)
    : trunk_(TrunkConfig{kInputChannels, 1, hidden, blocks, 0, Activation::silu}, std::move(prefix)) {}

ad::Var SourceNet::forward(ad::Tape& tape, ad::ParamSet& ps, const GridSpec& g, const ad::Var& forcing,
                           const ad::Var& sst, const ad::Var& embed) const {
    return trunk_.forward(tape, ps, g, ad::concat({forcing, sst, embed}));
}

} // namespace sstode::nn
