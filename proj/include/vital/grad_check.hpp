#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vital/autograd.hpp"

namespace vital {

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-6;
    // Denominator floor for the relative error, so near-zero gradients are
    // compared absolutely.
    double abs_floor = 1e-4;
    // Check at most this many entries per parameter (evenly strided); 0 = all.
    std::size_t max_entries_per_param = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_entry = 0;
    std::vector<double> per_param_max;
    std::size_t entries_checked = 0;
    // Frozen parameters that received a nonzero analytic gradient.
    std::size_t frozen_violations = 0;
    bool passed = false;
};

// Central differences on every trainable parameter entry; frozen parameters
// (requires_grad == false) are only checked for an all-zero analytic gradient.
// `loss_fn` must be deterministic and return a 1x1 loss built from `params`.
GradCheckReport grad_check(const std::function<Var()>& loss_fn, std::vector<Var> params,
                           const GradCheckOptions& opts = {});

}  // namespace vital
