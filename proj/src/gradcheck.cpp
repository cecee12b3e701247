#include "sstode/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "sstode/errors.hpp"

namespace sstode::ad {

namespace {

double evaluate(const LossFn& f, ParamSet& params) {
    Tape tape;
    return f(tape, params).item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n <= limit) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

} // namespace

GradcheckReport gradcheck(const LossFn& f, ParamSet& params, const GradcheckOptions& opts) {
    require(opts.h > 0 && std::isfinite(opts.h), ErrorCode::InvalidArgument, "gradcheck: step h must be positive");
    require(opts.rtol > 0, ErrorCode::InvalidArgument, "gradcheck: rtol must be positive");

    const double first = evaluate(f, params);
    const double second = evaluate(f, params);
    if (std::memcmp(&first, &second, sizeof(double)) != 0)
        throw Error(ErrorCode::NonDeterministicFunction, "gradcheck: two evaluations at identical parameters differ");
    require(std::isfinite(first), ErrorCode::NonFiniteInput, "gradcheck: loss is not finite");

    params.zero_grads();
    {
        Tape tape;
        Var loss = f(tape, params);
        tape.backward(loss);
    }

    std::mt19937_64 rng(opts.seed);
    GradcheckReport report;
    for (auto& [name, entry] : params.entries()) {
        const auto coords = pick_coords(entry.value.size(), opts.max_coords, rng);
        std::vector<double> numeric(coords.size());
        for (std::size_t k = 0; k < coords.size(); ++k) {
            double& p = entry.value[coords[k]];
            const double saved = p;
            p = saved + opts.h;
            const double up = evaluate(f, params);
            p = saved - opts.h;
            const double down = evaluate(f, params);
            p = saved;
            numeric[k] = (up - down) / (2.0 * opts.h);
        }
        double scale = 0.0;
        for (double v : numeric) scale = std::max(scale, std::abs(v));
        const double floor = std::max(1e-8, 1e-3 * scale);

        EntryCheck ec;
        ec.name = name;
        ec.checked = coords.size();
        for (std::size_t k = 0; k < coords.size(); ++k) {
            const double a = entry.grad[coords[k]], n = numeric[k];
            double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
            if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
            if (k == 0 || err > ec.max_rel_error) {
                ec.max_rel_error = err;
                ec.worst_index = coords[k];
                ec.analytic = a;
                ec.numeric = n;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, ec.max_rel_error);
        report.entries.push_back(std::move(ec));
    }
    report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error <= opts.rtol;
    return report;
}

} // namespace sstode::ad
