#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vital/autograd.hpp"

namespace vital {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0;  // <= 0 disables clipping
    double warmup_ratio = 0.05;
    std::size_t total_steps = 1;
};

// First/second moments per parameter plus the step counter.
class AdamW {
public:
    AdamW(AdamWConfig cfg, std::span<const Var> params);

    // One update from the gradients currently stored on `params`; a parameter
    // with no gradient buffer is treated as having a zero gradient.
    // Returns the pre-clipping global gradient norm.
    double step(std::span<Var> params);

    double learning_rate_at(std::size_t step) const;
    std::size_t warmup_steps() const;
    std::size_t steps_taken() const noexcept { return step_; }
    const AdamWConfig& config() const noexcept { return cfg_; }

private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t step_ = 0;
};

void zero_grads(std::span<Var> params);
double global_grad_norm(std::span<const Var> params);

}  // namespace vital
