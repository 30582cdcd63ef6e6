#include "vital/optim.hpp"

#include <cmath>

namespace vital {

AdamW::AdamW(AdamWConfig cfg, std::span<const Var> params) : cfg_(cfg) {
    if (cfg_.total_steps == 0) cfg_.total_steps = 1;
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p.rows(), p.cols());
        v_.emplace_back(p.rows(), p.cols());
    }
}

std::size_t AdamW::warmup_steps() const {
    return static_cast<std::size_t>(std::ceil(cfg_.warmup_ratio * static_cast<double>(cfg_.total_steps)));
}

double AdamW::learning_rate_at(std::size_t step) const {
    const std::size_t w = warmup_steps();
    if (w == 0 || step >= w) return cfg_.lr;
    return cfg_.lr * static_cast<double>(step) / static_cast<double>(w);
}

double global_grad_norm(std::span<const Var> params) {
    double s = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad().values()) s += g * g;
    }
    return std::sqrt(s);
}

void zero_grads(std::span<Var> params) {
    for (auto& p : params) p.zero_grad();
}

double AdamW::step(std::span<Var> params) {
    if (params.size() != m_.size()) throw ShapeError("AdamW parameter count changed");
    const std::size_t next = step_ + 1;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value().same_shape(m_[i])) throw ShapeError("AdamW moment shape mismatch");
        if (params[i].has_grad() && !params[i].grad().all_finite())
            throw NumericalError("non-finite gradient at step " + std::to_string(next) + " (parameter " +
                                 std::to_string(i) + ")");
    }
    const double norm = global_grad_norm(params);
    const double clip = (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) ? cfg_.max_grad_norm / norm : 1.0;

    step_ = next;
    const double lr = learning_rate_at(step_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const bool has = params[i].has_grad();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double g = has ? params[i].grad()[j] * clip : 0.0;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] *= 1.0 - lr * cfg_.weight_decay;
            w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        w.apply_precision();
    }
    return norm;
}

}  // namespace vital
