#include "sstode/gradcheck_suite.hpp"

#include <cmath>
#include <random>

#include "sstode/eei.hpp"
#include "sstode/embedding.hpp"
#include "sstode/experiment.hpp"
#include "sstode/metrics.hpp"
#include "sstode/nn.hpp"
#include "sstode/velocity_init.hpp"

namespace sstode {

namespace {

/// Small grid with a 2x2 island so masking and coastline stencils are exercised.
GridPtr check_grid(std::size_t n) {
    std::vector<std::uint8_t> mask(n * n, 1);
    const std::size_t r0 = n / 2 - 1, c0 = n / 2 - 1;
    for (std::size_t r = r0; r < r0 + 2; ++r)
        for (std::size_t c = c0; c < c0 + 2; ++c) mask[r * n + c] = 0;
    return GridSpec::global(n, n, std::move(mask));
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale, const GridSpec* g = nullptr) {
    std::normal_distribution<double> nd(0.0, scale);
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = nd(rng);
    if (g) {
        const std::size_t n = g->cells();
        for (std::size_t i = 0; i < t.size(); ++i)
            if (!g->ocean(i % n)) t[i] = 0.0;
    }
    return t;
}

/// Moves every parameter off its initialization (zero heads would hide most paths).
void perturb(ad::ParamSet& ps, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& [name, e] : ps.entries())
        for (auto& v : e.value.vec()) v += nd(rng);
}

std::vector<double> random_weights(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    std::vector<double> w(n);
    for (auto& v : w) v = ud(rng);
    return w;
}

SuiteCheck check(const std::string& name, const ad::LossFn& f, ad::ParamSet& ps, const SuiteOptions& opts) {
    return {name, ad::gradcheck(f, ps, opts.grad)};
}

} // namespace

std::vector<SuiteCheck> run_gradcheck_suite(const SuiteOptions& opts) {
    const std::size_t n = opts.size;
    const GridPtr grid = check_grid(n);
    const GridSpec& g = *grid;
    std::mt19937_64 rng(opts.grad.seed + 17);
    std::vector<SuiteCheck> out;

    // Velocity-estimation objective with the smoothness prior.
    {
        ad::ParamSet ps;
        ps.add("velocity", random_tensor({2, n, n}, rng, 0.5, &g));
        ps.add("kappa_raw", Tensor::scalar(-1.0));
        const Tensor sst = random_tensor({n, n}, rng, 1.0, &g);
        const Tensor tend = random_tensor({n, n}, rng, 0.3, &g);
        VelocityInitConfig vc;
        vc.rbf = true;
        vc.rbf_bandwidth = 2.0;
        vc.alpha = 1e-2;
        out.push_back(check(
            "residual_loss",
            [&](ad::Tape& t, ad::ParamSet& p) {
                return velocity_objective(t.constant(sst), t.constant(tend), t.param(p, "velocity"),
                                          t.param(p, "kappa_raw"), g, vc);
            },
            ps, opts));
    }

    // Full unrolled forecast: ODE with learned velocity dynamics, learnable
    // diffusivity and the source correction, Euler steps of one hour.
    {
        ModelConfig mc;
        mc.fv_hidden = 4;
        mc.fv_blocks = 1;
        mc.fv_attention_pool = 2;
        mc.fs_hidden = 4;
        mc.fs_blocks = 1;
        mc.step = 1.0;
        mc.solver = Solver::euler;
        const SstOdeModel model(mc, grid);
        ad::ParamSet ps;
        model.init(ps, opts.grad.seed, 0.2);
        perturb(ps, rng, 0.05);
        const Tensor y0 = random_tensor({1, n, n}, rng, 1.0, &g);
        const Tensor v0 = random_tensor({2, n, n}, rng, 0.2, &g);
        const Tensor forcing = random_tensor({4, n, n}, rng, 1.0, &g);
        std::vector<double> times;
        std::vector<Tensor> targets;
        for (std::size_t k = 1; k <= opts.euler_steps; ++k) {
            times.push_back(static_cast<double>(k));
            targets.push_back(random_tensor({1, n, n}, rng, 1.0, &g));
        }
        out.push_back(check(
            "forecast_loss",
            [&](ad::Tape& t, ad::ParamSet& p) {
                const auto vars = model.forecast(t, p, y0, v0, forcing, 0.0, times);
                ad::Var loss;
                for (std::size_t k = 0; k < vars.corrected.size(); ++k) {
                    const ad::Var l = mse_loss(vars.corrected[k], t.constant(targets[k]), g);
                    loss = loss.valid() ? loss + l : l;
                }
                return loss;
            },
            ps, opts));
    }

    const Tensor embed = EmbeddingBuilder(grid).build(5.0);

    // Velocity dynamics network, including its inputs.
    {
        const nn::VelocityNet net(4, 1, 2);
        ad::ParamSet ps;
        net.init(ps, opts.grad.seed);
        perturb(ps, rng, 0.05);
        ps.add("input.velocity", random_tensor({2, n, n}, rng, 0.5, &g));
        ps.add("input.sst", random_tensor({1, n, n}, rng, 1.0, &g));
        const auto w = random_weights(2 * g.cells(), rng);
        out.push_back(check(
            "f_v",
            [&](ad::Tape& t, ad::ParamSet& p) {
                const ad::Var y = t.param(p, "input.sst");
                const ad::Var grad = ad::concat({ad::grad_x(y, g), ad::grad_y(y, g)});
                return ad::weighted_sum(net.forward(t, p, g, t.param(p, "input.velocity"), y, grad, t.constant(embed)),
                                        w);
            },
            ps, opts));
    }

    // Source network.
    {
        const nn::SourceNet net(4, 1);
        ad::ParamSet ps;
        net.init(ps, opts.grad.seed);
        perturb(ps, rng, 0.05);
        ps.add("input.forcing", random_tensor({4, n, n}, rng, 1.0, &g));
        ps.add("input.sst", random_tensor({1, n, n}, rng, 1.0, &g));
        const auto w = random_weights(g.cells(), rng);
        out.push_back(check(
            "f_s",
            [&](ad::Tape& t, ad::ParamSet& p) {
                return ad::weighted_sum(
                    net.forward(t, p, g, t.param(p, "input.forcing"), t.param(p, "input.sst"), t.constant(embed)), w);
            },
            ps, opts));
    }

    // Spatiotemporal embedding as a function of coordinates and time.
    {
        ad::ParamSet ps;
        Tensor lat({n, n}), lon({n, n});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                lat[r * n + c] = g.lat_deg(r) * std::numbers::pi / 180.0;
                lon[r * n + c] = g.lon_deg(c) * std::numbers::pi / 180.0;
            }
        ps.add("lat", lat);
        ps.add("lon", lon);
        ps.add("t", Tensor::scalar(7.0));
        const Tensor lsm({n, n}, 1.0);
        const Tensor oro = random_tensor({n, n}, rng, 1.0);
        const auto w = random_weights(embedding_layout::channels * g.cells(), rng);
        out.push_back(check(
            "embeddings",
            [&](ad::Tape& t, ad::ParamSet& p) {
                const ad::Var s = spatial_embedding(t.param(p, "lat"), t.param(p, "lon"));
                const ad::Var tm = temporal_embedding(t.param(p, "t"));
                return ad::weighted_sum(assemble_embedding(s, tm, t.constant(lsm), t.constant(oro)), w);
            },
            ps, opts));
    }

    // Metric path: MSE and ACC with respect to the prediction.
    {
        ad::ParamSet ps;
        ps.add("pred", random_tensor({1, n, n}, rng, 1.0, &g));
        const Tensor truth = random_tensor({1, n, n}, rng, 1.0, &g);
        out.push_back(check(
            "metrics",
            [&](ad::Tape& t, ad::ParamSet& p) {
                const ad::Var pred = t.param(p, "pred");
                return mse_loss(pred, t.constant(truth), g) + acc_metric(pred, t.constant(truth), g);
            },
            ps, opts));
    }

    // Flux-sum source with its learned positive scale.
    {
        ad::ParamSet ps;
        ps.add("forcing", random_tensor({4, n, n}, rng, 1.0, &g));
        ps.add("scale_raw", Tensor::scalar(0.3));
        const auto w = random_weights(g.cells(), rng);
        out.push_back(check(
            "qnet_scale",
            [&](ad::Tape& t, ad::ParamSet& p) {
                return ad::weighted_sum(qnet_scale(t.param(p, "forcing"), t.param(p, "scale_raw")), w);
            },
            ps, opts));
    }
    return out;
}

bool all_passed(const std::vector<SuiteCheck>& checks) {
    for (const auto& c : checks)
        if (!c.report.passed) return false;
    return !checks.empty();
}

} // namespace sstode
