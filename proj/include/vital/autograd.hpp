#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vital/tensor.hpp"

namespace vital {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
};

// Handle to a node of the reverse-mode graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Var constant(Tensor value);
    static Var leaf(Tensor value, bool requires_grad);

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool r) { node_->requires_grad = r; }
    void zero_grad() { node_->grad = Tensor(); }

    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Node* id() const noexcept { return node_.get(); }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

// Disables graph recording on this thread; values are computed identically.
class NoGradGuard {
public:
    NoGradGuard() noexcept;
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

// Builds an output node. Parents and the backward closure are kept only when
// recording is on and some parent needs a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Seeds d(loss)/d(loss) = 1 on a 1x1 loss and accumulates into every leaf.
void backward(const Var& loss);

}  // namespace vital
