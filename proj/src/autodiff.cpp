#include "sstode/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "sstode/errors.hpp"

namespace sstode::ad {

// ---------------------------------------------------------------- ParamSet

ParamEntry& ParamSet::add(const std::string& name, Tensor init) {
    require(!contains(name), ErrorCode::InvalidArgument, "duplicate parameter '" + name + "'");
    Tensor grad(init.shape(), 0.0);
    auto [it, ok] = entries_.emplace(name, ParamEntry{std::move(init), std::move(grad)});
    return it->second;
}

ParamEntry& ParamSet::at(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
    return it->second;
}

const ParamEntry& ParamSet::at(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
    return it->second;
}

void ParamSet::zero_grads() {
    for (auto& [name, e] : entries_) {
        if (e.grad.shape() != e.value.shape()) e.grad = Tensor(e.value.shape(), 0.0);
        else e.grad.fill(0.0);
    }
    grads_populated_ = false;
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.size();
    return n;
}

void ParamSet::assign_from(const ParamSet& other) {
    for (const auto& [name, e] : other.entries_) entries_[name] = e;
    step = other.step;
}

bool ParamSet::values_equal(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (const auto& [name, e] : entries_) {
        auto it = other.entries_.find(name);
        if (it == other.entries_.end() || it->second.value.shape() != e.value.shape()) return false;
        if (e.value.vec() != it->second.value.vec()) return false;
    }
    return true;
}

// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
    require(!consumed_, ErrorCode::GraphConsumed, "tape already consumed by backward()");
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamSet& params, const std::string& name) {
    require(!consumed_, ErrorCode::GraphConsumed, "tape already consumed by backward()");
    ParamEntry& entry = params.at(name);
    if (auto it = param_nodes_.find(&entry); it != param_nodes_.end()) return Var(this, it->second);
    nodes_.push_back(Node{entry.value, {}, {}, &params, &entry, true});
    param_nodes_[&entry] = nodes_.size() - 1;
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
    require(!consumed_, ErrorCode::GraphConsumed, "tape already consumed by backward()");
    bool needs = false;
    for (const auto& p : parents) {
        require(p.tape() == this, ErrorCode::InvalidArgument, "operand recorded on a different tape");
        needs = needs || nodes_[p.id()].needs_grad;
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Tape::backward(const Var& loss) {
    require(!consumed_, ErrorCode::GraphConsumed, "backward() called twice on the same tape");
    require(loss.tape() == this, ErrorCode::InvalidArgument, "loss recorded on a different tape");
    require(nodes_[loss.id()].value.size() == 1, ErrorCode::ShapeMismatch, "loss must be a scalar");
    consumed_ = true;
    grad(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.param) {
            auto& dst = n.param->grad;
            if (dst.shape() != n.param->value.shape()) dst = Tensor(n.param->value.shape(), 0.0);
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
            n.owner->mark_grads_populated();
            continue;
        }
        if (n.backward) {
            // Move the gradient out so the callee may freely grow other buffers.
            Tensor g = std::move(n.grad);
            n.backward(*this, g);
            n.backward = nullptr;
        }
    }
    // Parameters that the loss does not depend on still count as populated (grad 0).
    for (auto& n : nodes_)
        if (n.param) n.owner->mark_grads_populated();
}

// ---------------------------------------------------------------- helpers

namespace {

void check_same(const Var& a, const Var& b, const char* op) {
    require(a.tape() == b.tape(), ErrorCode::InvalidArgument, std::string(op) + ": operands on different tapes");
    require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
            std::string(op) + ": shapes " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

std::size_t plane_size(const GridSpec& g, const Var& a, const char* op) {
    const std::size_t n = g.cells();
    require(a.value().size() % n == 0 && a.value().size() > 0, ErrorCode::ShapeMismatch,
            std::string(op) + ": tensor " + shape_string(a.shape()) + " is not a stack of grid planes");
    return n;
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(y), {a}, [ia, dfdx](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ia);
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(x[i]);
    });
}

double softplus_value(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Symmetric 1D Gaussian weights, truncated at 3 sigma.
std::vector<double> gaussian_taps(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k) taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    return taps;
}

/// Separable unnormalized smoothing of one plane; the operator is symmetric.
void smooth_plane(const GridSpec& g, const std::vector<double>& taps, std::span<const double> in,
                  std::span<double> out) {
    const long H = static_cast<long>(g.height()), W = static_cast<long>(g.width());
    const long R = static_cast<long>(taps.size() / 2);
    std::vector<double> tmp(in.size(), 0.0);
    for (long r = 0; r < H; ++r) {
        for (long c = 0; c < W; ++c) {
            double s = 0.0;
            for (long k = -R; k <= R; ++k) {
                long cc = c + k;
                if (cc < 0 || cc >= W) {
                    if (g.boundary_x() == Boundary::reflective) continue;
                    cc = ((cc % W) + W) % W;
                }
                s += taps[k + R] * in[r * W + cc];
            }
            tmp[r * W + c] = s;
        }
    }
    for (long r = 0; r < H; ++r) {
        for (long c = 0; c < W; ++c) {
            double s = 0.0;
            for (long k = -R; k <= R; ++k) {
                long rr = r + k;
                if (rr < 0 || rr >= H) {
                    if (g.boundary_y() == Boundary::reflective) continue;
                    rr = ((rr % H) + H) % H;
                }
                s += taps[k + R] * tmp[rr * W + c];
            }
            out[r * W + c] = s;
        }
    }
}

using PlaneKernel = void (*)(const GridSpec&, std::span<const double>, std::span<double>);

Var plane_linear(const Var& a, const GridSpec& g, PlaneKernel fwd, PlaneKernel adj, const char* op) {
    const std::size_t n = plane_size(g, a, op);
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t p = 0; p < x.size() / n; ++p)
        fwd(g, x.span().subspan(p * n, n), y.span().subspan(p * n, n));
    const std::size_t ia = a.id();
    const GridSpec* gp = &g;
    return a.tape()->record(std::move(y), {a}, [ia, gp, adj, n](Tape& t, const Tensor& go) {
        Tensor& gx = t.grad(ia);
        for (std::size_t p = 0; p < go.size() / n; ++p)
            adj(*gp, go.span().subspan(p * n, n), gx.span().subspan(p * n, n));
    });
}

void mask_adjoint(const GridSpec& g, std::span<const double> go, std::span<double> gi) {
    for (std::size_t i = 0; i < g.cells(); ++i)
        if (g.ocean(i)) gi[i] += go[i];
}

void mask_forward(const GridSpec& g, std::span<const double> f, std::span<double> out) {
    for (std::size_t i = 0; i < g.cells(); ++i) out[i] = g.ocean(i) ? f[i] : 0.0;
}

struct Bins {
    std::vector<std::size_t> begin, end;
};

Bins adaptive_bins(std::size_t in, std::size_t out) {
    Bins b;
    for (std::size_t i = 0; i < out; ++i) {
        b.begin.push_back(i * in / out);
        b.end.push_back(((i + 1) * in + out - 1) / out);
    }
    return b;
}

} // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same(a, b, "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same(a, b, "sub");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same(a, b, "mul");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same(a, b, "div");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(y), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
    Tensor y = a.value();
    for (auto& v : y.vec()) v *= c;
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(y), {a}, [ia, c](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor y = a.value();
    for (auto& v : y.vec()) v += c;
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var sin(const Var& a) {
    return unary(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var cos(const Var& a) {
    return unary(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Var softplus(const Var& a) { return unary(a, softplus_value, sigmoid_value); }

Var sigmoid(const Var& a) {
    return unary(a, sigmoid_value, [](double x) {
        const double s = sigmoid_value(x);
        return s * (1.0 - s);
    });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var silu(const Var& a) {
    return unary(a, [](double x) { return x * sigmoid_value(x); },
                 [](double x) {
                     const double s = sigmoid_value(x);
                     return s * (1.0 + x * (1.0 - s));
                 });
}

// ---------------------------------------------------------------- broadcasts

Var mul_scalar(const Var& a, const Var& s) {
    require(s.value().size() == 1, ErrorCode::ShapeMismatch, "mul_scalar: scalar operand must have one element");
    Tensor y = a.value();
    const double sv = s.item();
    for (auto& v : y.vec()) v *= sv;
    const std::size_t ia = a.id(), is = s.id();
    return a.tape()->record(std::move(y), {a, s}, [ia, is](Tape& t, const Tensor& g) {
        const double sv = t.value(is)[0];
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
        }
        if (t.needs_grad(is)) {
            const Tensor& av = t.value(ia);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
            t.grad(is)[0] += acc;
        }
    });
}

Var add_scalar(const Var& a, const Var& s) {
    require(s.value().size() == 1, ErrorCode::ShapeMismatch, "add_scalar: scalar operand must have one element");
    Tensor y = a.value();
    const double sv = s.item();
    for (auto& v : y.vec()) v += sv;
    const std::size_t ia = a.id(), is = s.id();
    return a.tape()->record(std::move(y), {a, s}, [ia, is](Tape& t, const Tensor& g) {
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(is)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
            t.grad(is)[0] += acc;
        }
    });
}

Var add_channel_bias(const Var& x, const Var& b) {
    const Tensor& xv = x.value();
    require(xv.rank() >= 2 && b.value().size() == xv.dim(0), ErrorCode::ShapeMismatch,
            "add_channel_bias: bias length must equal channel count");
    const std::size_t C = xv.dim(0), n = xv.size() / C;
    Tensor y = xv;
    const Tensor& bv = b.value();
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n; ++i) y[c * n + i] += bv[c];
    const std::size_t ix = x.id(), ib = b.id();
    return x.tape()->record(std::move(y), {x, b}, [ix, ib, C, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(ix)) {
            Tensor& gx = t.grad(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t c = 0; c < C; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[c * n + i];
                gb[c] += acc;
            }
        }
    });
}

Var mul_plane(const Var& x, const Var& m) {
    const Tensor& xv = x.value();
    const Tensor& mv = m.value();
    const std::size_t n = mv.size();
    require(n > 0 && xv.size() % n == 0, ErrorCode::ShapeMismatch, "mul_plane: plane size mismatch");
    Tensor y = xv;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mv[i % n];
    const std::size_t ix = x.id(), im = m.id();
    return x.tape()->record(std::move(y), {x, m}, [ix, im, n](Tape& t, const Tensor& g) {
        const Tensor& mv = t.value(im);
        if (t.needs_grad(ix)) {
            Tensor& gx = t.grad(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mv[i % n];
        }
        if (t.needs_grad(im)) {
            const Tensor& xv = t.value(ix);
            Tensor& gm = t.grad(im);
            for (std::size_t i = 0; i < g.size(); ++i) gm[i % n] += g[i] * xv[i];
        }
    });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().vec()) s += v;
    const std::size_t ia = a.id();
    return a.tape()->record(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var weighted_sum(const Var& a, const std::vector<double>& w) {
    require(!w.empty() && a.value().size() % w.size() == 0, ErrorCode::ShapeMismatch,
            "weighted_sum: weights do not tile the tensor");
    const Tensor& x = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i % w.size()];
    const std::size_t ia = a.id();
    return a.tape()->record(Tensor::scalar(s), {a}, [ia, w](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * w[i % w.size()];
    });
}

Var masked_mean(const Var& a, const GridSpec& g) {
    const std::size_t n = plane_size(g, a, "masked_mean");
    require(g.ocean_count() > 0, ErrorCode::EmptyEvaluation, "masked_mean: grid has no ocean cells");
    const double planes = static_cast<double>(a.value().size() / n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = g.ocean(i) ? 1.0 / (planes * static_cast<double>(g.ocean_count())) : 0.0;
    return weighted_sum(a, w);
}

// ---------------------------------------------------------------- stencils

Var grad_x(const Var& a, const GridSpec& g) {
    return plane_linear(a, g, stencil::grad_x, stencil::grad_x_adjoint, "grad_x");
}

Var grad_y(const Var& a, const GridSpec& g) {
    return plane_linear(a, g, stencil::grad_y, stencil::grad_y_adjoint, "grad_y");
}

Var laplacian(const Var& a, const GridSpec& g) {
    return plane_linear(a, g, stencil::laplacian, stencil::laplacian_adjoint, "laplacian");
}

Var apply_mask(const Var& a, const GridSpec& g) {
    if (g.fully_ocean()) return a;
    return plane_linear(a, g, mask_forward, mask_adjoint, "apply_mask");
}

Var gaussian_smooth(const Var& a, const GridSpec& g, double sigma) {
    require(sigma > 0, ErrorCode::InvalidArgument, "gaussian_smooth: bandwidth must be positive");
    const std::size_t n = plane_size(g, a, "gaussian_smooth");
    const auto taps = gaussian_taps(sigma);
    std::vector<double> m(n), denom(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = g.ocean(i) ? 1.0 : 0.0;
    smooth_plane(g, taps, m, denom);

    const Tensor& x = a.value();
    Tensor y(x.shape());
    std::vector<double> buf(n), num(n);
    for (std::size_t p = 0; p < x.size() / n; ++p) {
        for (std::size_t i = 0; i < n; ++i) buf[i] = x[p * n + i] * m[i];
        smooth_plane(g, taps, buf, num);
        for (std::size_t i = 0; i < n; ++i) y[p * n + i] = m[i] ? num[i] / denom[i] : 0.0;
    }
    const std::size_t ia = a.id();
    const GridSpec* gp = &g;
    return a.tape()->record(std::move(y), {a}, [ia, gp, taps, m, denom, n](Tape& t, const Tensor& go) {
        Tensor& gx = t.grad(ia);
        std::vector<double> buf(n), back(n);
        for (std::size_t p = 0; p < go.size() / n; ++p) {
            for (std::size_t i = 0; i < n; ++i) buf[i] = m[i] ? go[p * n + i] / denom[i] : 0.0;
            smooth_plane(*gp, taps, buf, back);
            for (std::size_t i = 0; i < n; ++i) gx[p * n + i] += back[i] * m[i];
        }
    });
}

// ---------------------------------------------------------------- channels

Var concat(const std::vector<Var>& parts) {
    require(!parts.empty(), ErrorCode::InvalidArgument, "concat: no inputs");
    const Shape& s0 = parts.front().shape();
    Shape out_shape = s0;
    std::size_t channels = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        require(s.size() == s0.size() && std::equal(s.begin() + 1, s.end(), s0.begin() + 1), ErrorCode::ShapeMismatch,
                "concat: trailing dimensions differ");
        channels += s[0];
    }
    out_shape[0] = channels;
    Tensor y(out_shape);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        std::copy(p.value().vec().begin(), p.value().vec().end(), y.vec().begin() + off);
        off += p.value().size();
    }
    std::vector<std::size_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    return parts.front().tape()->record(std::move(y), parts, [ids, offsets](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.needs_grad(ids[k])) continue;
            Tensor& gp = t.grad(ids[k]);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
        }
    });
}

Var slice_channels(const Var& a, std::size_t begin, std::size_t end) {
    const Tensor& x = a.value();
    require(begin < end && end <= x.dim(0), ErrorCode::OutOfBounds, "slice_channels: bad range");
    const std::size_t n = x.size() / x.dim(0);
    Shape s = x.shape();
    s[0] = end - begin;
    Tensor y(s, std::vector<double>(x.vec().begin() + begin * n, x.vec().begin() + end * n));
    const std::size_t ia = a.id(), off = begin * n;
    return a.tape()->record(std::move(y), {a}, [ia, off](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
    });
}

Var reshape(const Var& a, Shape shape) {
    Tensor y = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(y), {a}, [ia](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var broadcast_planes(const Var& tv, std::size_t height, std::size_t width) {
    const Tensor& x = tv.value();
    const std::size_t K = x.size(), n = height * width;
    Tensor y({K, height, width});
    for (std::size_t k = 0; k < K; ++k) std::fill(y.data() + k * n, y.data() + (k + 1) * n, x[k]);
    const std::size_t it = tv.id();
    return tv.tape()->record(std::move(y), {tv}, [it, K, n](Tape& t, const Tensor& g) {
        Tensor& gt = t.grad(it);
        for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += g[k * n + i];
            gt[k] += acc;
        }
    });
}

Var outer_channels(const Var& s, const Var& tv) {
    const Tensor& sv = s.value();
    const Tensor& tt = tv.value();
    require(sv.rank() == 3, ErrorCode::ShapeMismatch, "outer_channels: spatial block must be [C,H,W]");
    const std::size_t C = sv.dim(0), K = tt.size(), n = sv.dim(1) * sv.dim(2);
    Tensor y({C * K, sv.dim(1), sv.dim(2)});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < n; ++i) y[(c * K + k) * n + i] = sv[c * n + i] * tt[k];
    const std::size_t is = s.id(), it = tv.id();
    return s.tape()->record(std::move(y), {s, tv}, [is, it, C, K, n](Tape& t, const Tensor& g) {
        const Tensor& sv = t.value(is);
        const Tensor& tt = t.value(it);
        if (t.needs_grad(is)) {
            Tensor& gs = t.grad(is);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t i = 0; i < n; ++i) gs[c * n + i] += g[(c * K + k) * n + i] * tt[k];
        }
        if (t.needs_grad(it)) {
            Tensor& gt = t.grad(it);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i) acc += g[(c * K + k) * n + i] * sv[c * n + i];
                    gt[k] += acc;
                }
        }
    });
}

// ---------------------------------------------------------------- convolution

Var conv2d(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require(xv.rank() == 3 && wv.rank() == 4 && wv.dim(1) == xv.dim(0) && wv.dim(2) == wv.dim(3) &&
                wv.dim(2) % 2 == 1 && b.value().size() == wv.dim(0),
            ErrorCode::ShapeMismatch,
            "conv2d: input " + shape_string(xv.shape()) + " weight " + shape_string(wv.shape()));
    const std::size_t Ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2), Co = wv.dim(0), K = wv.dim(2);
    const long R = static_cast<long>(K / 2);
    const std::size_t n = H * W;
    Tensor y({Co, H, W});
    const Tensor& bv = b.value();

    // Visits every (output row range, column range) pair for one kernel tap.
    auto for_tap = [H, W, R](long dy, long dx, auto&& body) {
        const long r0 = std::max<long>(0, -dy), r1 = std::min<long>(H, static_cast<long>(H) - dy);
        const long c0 = std::max<long>(0, -dx), c1 = std::min<long>(W, static_cast<long>(W) - dx);
        for (long r = r0; r < r1; ++r) body(r, c0, c1);
        (void)R;
    };

    for (std::size_t co = 0; co < Co; ++co) {
        double* out = y.data() + co * n;
        std::fill(out, out + n, bv[co]);
        for (std::size_t ci = 0; ci < Ci; ++ci) {
            const double* in = xv.data() + ci * n;
            for (long ky = 0; ky < static_cast<long>(K); ++ky) {
                for (long kx = 0; kx < static_cast<long>(K); ++kx) {
                    const double wt = wv[((co * Ci + ci) * K + ky) * K + kx];
                    if (wt == 0.0) continue;
                    const long dy = ky - R, dx = kx - R;
                    for_tap(dy, dx, [&](long r, long c0, long c1) {
                        double* o = out + r * W;
                        const double* src = in + (r + dy) * W + dx;
                        for (long c = c0; c < c1; ++c) o[c] += wt * src[c];
                    });
                }
            }
        }
    }

    const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
    return x.tape()->record(std::move(y), {x, w, b}, [=](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ix);
        const Tensor& wv = t.value(iw);
        const bool need_x = t.needs_grad(ix), need_w = t.needs_grad(iw);
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t co = 0; co < Co; ++co) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[co * n + i];
                gb[co] += acc;
            }
        }
        if (!need_x && !need_w) return;
        Tensor* gx = need_x ? &t.grad(ix) : nullptr;
        Tensor* gw = need_w ? &t.grad(iw) : nullptr;
        for (std::size_t co = 0; co < Co; ++co) {
            const double* go = g.data() + co * n;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
                const double* in = xv.data() + ci * n;
                double* gin = need_x ? gx->data() + ci * n : nullptr;
                for (long ky = 0; ky < static_cast<long>(K); ++ky) {
                    for (long kx = 0; kx < static_cast<long>(K); ++kx) {
                        const std::size_t widx = ((co * Ci + ci) * K + ky) * K + kx;
                        const double wt = wv[widx];
                        const long dy = ky - R, dx = kx - R;
                        double acc = 0.0;
                        for_tap(dy, dx, [&](long r, long c0, long c1) {
                            const double* gr = go + r * W;
                            const long off = (r + dy) * static_cast<long>(W) + dx;
                            if (need_w)
                                for (long c = c0; c < c1; ++c) acc += gr[c] * in[off + c];
                            if (need_x && wt != 0.0)
                                for (long c = c0; c < c1; ++c) gin[off + c] += wt * gr[c];
                        });
                        if (need_w) (*gw)[widx] += acc;
                    }
                }
            }
        }
    });
}

Var avg_pool(const Var& x, std::size_t out_h, std::size_t out_w) {
    const Tensor& xv = x.value();
    require(xv.rank() == 3 && out_h >= 1 && out_w >= 1 && out_h <= xv.dim(1) && out_w <= xv.dim(2),
            ErrorCode::ShapeMismatch, "avg_pool: bad output size");
    const std::size_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    const Bins rb = adaptive_bins(H, out_h), cb = adaptive_bins(W, out_w);
    Tensor y({C, out_h, out_w});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < out_h; ++p)
            for (std::size_t q = 0; q < out_w; ++q) {
                double s = 0.0;
                for (std::size_t r = rb.begin[p]; r < rb.end[p]; ++r)
                    for (std::size_t k = cb.begin[q]; k < cb.end[q]; ++k) s += xv[(c * H + r) * W + k];
                const double cnt = static_cast<double>((rb.end[p] - rb.begin[p]) * (cb.end[q] - cb.begin[q]));
                y[(c * out_h + p) * out_w + q] = s / cnt;
            }
    const std::size_t ix = x.id();
    return x.tape()->record(std::move(y), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad(ix);
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t p = 0; p < out_h; ++p)
                for (std::size_t q = 0; q < out_w; ++q) {
                    const double cnt =
                        static_cast<double>((rb.end[p] - rb.begin[p]) * (cb.end[q] - cb.begin[q]));
                    const double v = g[(c * out_h + p) * out_w + q] / cnt;
                    for (std::size_t r = rb.begin[p]; r < rb.end[p]; ++r)
                        for (std::size_t k = cb.begin[q]; k < cb.end[q]; ++k) gx[(c * H + r) * W + k] += v;
                }
    });
}

Var upsample(const Var& x, std::size_t out_h, std::size_t out_w) {
    const Tensor& xv = x.value();
    require(xv.rank() == 3 && out_h >= xv.dim(1) && out_w >= xv.dim(2), ErrorCode::ShapeMismatch,
            "upsample: bad output size");
    const std::size_t C = xv.dim(0), P = xv.dim(1), Q = xv.dim(2);
    std::vector<std::size_t> rmap(out_h), cmap(out_w);
    for (std::size_t r = 0; r < out_h; ++r) rmap[r] = r * P / out_h;
    for (std::size_t c = 0; c < out_w; ++c) cmap[c] = c * Q / out_w;
    Tensor y({C, out_h, out_w});
    for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t r = 0; r < out_h; ++r)
            for (std::size_t c = 0; c < out_w; ++c) y[(ch * out_h + r) * out_w + c] = xv[(ch * P + rmap[r]) * Q + cmap[c]];
    const std::size_t ix = x.id();
    return x.tape()->record(std::move(y), {x}, [=](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad(ix);
        for (std::size_t ch = 0; ch < C; ++ch)
            for (std::size_t r = 0; r < out_h; ++r)
                for (std::size_t c = 0; c < out_w; ++c)
                    gx[(ch * P + rmap[r]) * Q + cmap[c]] += g[(ch * out_h + r) * out_w + c];
    });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), ErrorCode::ShapeMismatch,
            "matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    const std::size_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
    Tensor y({M, N});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = av[i * K + k];
            for (std::size_t j = 0; j < N; ++j) y[i * N + j] += aik * bv[k * N + j];
        }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(y), {a, b}, [=](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad(ia);
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < N; ++j) acc += g[i * N + j] * bv[k * N + j];
                    ga[i * K + k] += acc;
                }
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad(ib);
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double aik = av[i * K + k];
                    for (std::size_t j = 0; j < N; ++j) gb[k * N + j] += aik * g[i * N + j];
                }
        }
    });
}

Var transpose(const Var& a) {
    const Tensor& av = a.value();
    require(av.rank() == 2, ErrorCode::ShapeMismatch, "transpose: expects a matrix");
    const std::size_t M = av.dim(0), N = av.dim(1);
    Tensor y({N, M});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) y[j * M + i] = av[i * N + j];
    const std::size_t ia = a.id();
    return a.tape()->record(std::move(y), {a}, [=](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) ga[i * N + j] += g[j * M + i];
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& av = a.value();
    require(av.rank() == 2, ErrorCode::ShapeMismatch, "softmax_rows: expects a matrix");
    const std::size_t M = av.dim(0), N = av.dim(1);
    Tensor y({M, N});
    for (std::size_t i = 0; i < M; ++i) {
        double mx = av[i * N];
        for (std::size_t j = 1; j < N; ++j) mx = std::max(mx, av[i * N + j]);
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += (y[i * N + j] = std::exp(av[i * N + j] - mx));
        for (std::size_t j = 0; j < N; ++j) y[i * N + j] /= s;
    }
    const std::size_t ia = a.id();
    Tape* tape = a.tape();
    const std::size_t iy = tape->size();  // id this node will receive
    return tape->record(std::move(y), {a}, [=](Tape& t, const Tensor& g) {
        const Tensor& yv = t.value(iy);
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < M; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < N; ++j) dot += g[i * N + j] * yv[i * N + j];
            for (std::size_t j = 0; j < N; ++j) ga[i * N + j] += yv[i * N + j] * (g[i * N + j] - dot);
        }
    });
}

} // namespace sstode::ad
