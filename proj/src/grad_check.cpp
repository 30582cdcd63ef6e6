#include "vital/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vital/optim.hpp"

namespace vital {

GradCheckReport grad_check(const std::function<Var()>& loss_fn, std::vector<Var> params,
                           const GradCheckOptions& opts) {
    GradCheckReport rep;
    rep.per_param_max.assign(params.size(), 0.0);

    zero_grads(params);
    {
        Var loss = loss_fn();
        if (!std::isfinite(loss.value().item())) throw NumericalError("non-finite loss at the base point");
        backward(loss);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        analytic.push_back(p.has_grad() ? p.grad() : Tensor(p.rows(), p.cols()));
        if (!analytic.back().all_finite()) throw NumericalError("non-finite analytic gradient at parameter " + std::to_string(i));
    }
    zero_grads(params);

    auto eval = [&]() {
        NoGradGuard ng;
        return loss_fn().value().item();
    };

    for (std::size_t i = 0; i < params.size(); ++i) {
        Var& p = params[i];
        if (!p.requires_grad()) {
            bool nonzero = false;
            for (double g : analytic[i].values()) nonzero = nonzero || g != 0.0;
            if (nonzero) ++rep.frozen_violations;
            continue;
        }
        const std::size_t n = p.value().size();
        std::size_t stride = 1;
        if (opts.max_entries_per_param > 0 && n > opts.max_entries_per_param)
            stride = (n + opts.max_entries_per_param - 1) / opts.max_entries_per_param;
        for (std::size_t j = 0; j < n; j += stride) {
            // Five-point stencil: O(h^4) truncation lets h stay large enough
            // that rounding noise in the loss does not dominate.
            const double orig = p.value()[j];
            auto at = [&](double offset) {
                p.mutable_value()[j] = orig + offset;
                const double f = eval();
                if (!std::isfinite(f))
                    throw NumericalError("non-finite loss while perturbing parameter " + std::to_string(i));
                return f;
            };
            const double h = opts.step;
            const double f2p = at(2 * h), f1p = at(h), f1m = at(-h), f2m = at(-2 * h);
            p.mutable_value()[j] = orig;
            const double numeric = (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h);
            const double a = analytic[i][j];
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.entries_checked;
            rep.per_param_max[i] = std::max(rep.per_param_max[i], rel);
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = i;
                rep.worst_entry = j;
            }
        }
    }
    rep.passed = rep.max_rel_error <= opts.tolerance && rep.frozen_violations == 0;
    return rep;
}

}  // namespace vital
