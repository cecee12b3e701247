#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sstode/grid.hpp"
#include "sstode/tensor.hpp"

namespace sstode::ad {

struct ParamEntry {
    Tensor value;
    Tensor grad;
};

/// Named learnable tensors with gradient slots. Iteration order is the
/// lexicographic name order, which keeps checkpoints and updates deterministic.
class ParamSet {
public:
    ParamEntry& add(const std::string& name, Tensor init);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;

    std::map<std::string, ParamEntry>& entries() noexcept { return entries_; }
    const std::map<std::string, ParamEntry>& entries() const noexcept { return entries_; }

    void zero_grads();
    bool grads_populated() const noexcept { return grads_populated_; }
    void mark_grads_populated() noexcept { grads_populated_ = true; }

    std::size_t total_size() const;
    /// Copies every entry of `other` into this set, replacing same-named entries.
    void assign_from(const ParamSet& other);
    bool values_equal(const ParamSet& other) const;

    std::size_t step = 0;

private:
    std::map<std::string, ParamEntry> entries_;
    bool grads_populated_ = false;
};

class Tape;

/// Handle to a node on a Tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value()[0]; }
    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Recorded computation graph for reverse-mode accumulation. One tape per
/// loss evaluation; backward() consumes it.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to a parameter; repeated calls for the same entry return the same node.
    Var param(ParamSet& params, const std::string& name);

    /// Appends a node. `backward` runs only if some parent needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
    /// Gradient buffer of a node, allocated on first use.
    Tensor& grad(std::size_t id);

    /// Seeds d(loss)/d(loss) = 1 and propagates to every parameter leaf.
    void backward(const Var& loss);
    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        ParamSet* owner = nullptr;
        ParamEntry* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    std::map<const ParamEntry*, std::size_t> param_nodes_;
    bool consumed_ = false;
};

// Elementwise arithmetic. Binary ops need equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var square(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var silu(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator-(const Var& a) { return neg(a); }

/// a * s where s has exactly one element.
Var mul_scalar(const Var& a, const Var& s);
/// a + s where s has exactly one element.
Var add_scalar(const Var& a, const Var& s);
/// x[C,H,W] + b[C] broadcast over each plane.
Var add_channel_bias(const Var& x, const Var& b);
/// x[C,H,W] * m[H,W] for every channel.
Var mul_plane(const Var& x, const Var& m);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of a[k] * w[k mod w.size()]; weights are constants.
Var weighted_sum(const Var& a, const std::vector<double>& w);
/// Mean over ocean cells of every plane of a [..., H, W].
Var masked_mean(const Var& a, const GridSpec& g);

// Grid stencils, applied independently to each H*W plane.
Var grad_x(const Var& a, const GridSpec& g);
Var grad_y(const Var& a, const GridSpec& g);
Var laplacian(const Var& a, const GridSpec& g);
/// Zeroes land cells.
Var apply_mask(const Var& a, const GridSpec& g);
/// Mask-aware normalized Gaussian smoothing (bandwidth in cells, truncated at 3 sigma).
Var gaussian_smooth(const Var& a, const GridSpec& g, double sigma);

// Channel manipulation on [C, ...] tensors.
Var concat(const std::vector<Var>& parts);
Var slice_channels(const Var& a, std::size_t begin, std::size_t end);
Var reshape(const Var& a, Shape shape);
/// t[K] -> [K, H, W] with every plane constant.
Var broadcast_planes(const Var& t, std::size_t height, std::size_t width);
/// s[C,H,W], t[K] -> [C*K, H, W] with plane c*K+k = s[c] * t[k].
Var outer_channels(const Var& s, const Var& t);

/// Same-size 2D convolution, zero padding. x[Cin,H,W], w[Cout,Cin,K,K], b[Cout].
Var conv2d(const Var& x, const Var& w, const Var& b);
/// Adaptive average pooling [C,H,W] -> [C,P,Q].
Var avg_pool(const Var& x, std::size_t out_h, std::size_t out_w);
/// Nearest upsampling that is the transpose pattern of avg_pool: [C,P,Q] -> [C,H,W].
Var upsample(const Var& x, std::size_t out_h, std::size_t out_w);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax_rows(const Var& a);

} // namespace sstode::ad
