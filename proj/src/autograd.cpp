#include "vital/autograd.hpp"

#include <unordered_set>

namespace vital {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.rows(), value.cols());
    return grad;
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    value.apply_precision();
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (!g_grad_enabled) return Var(std::move(n));
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (!needs) return Var(std::move(n));
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
    return Var(std::move(n));
}

void backward(const Var& loss) {
    if (!loss.defined() || loss.value().size() != 1) throw ShapeError("backward needs a 1x1 loss");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS for a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior gradients are not needed after the sweep.
    for (Node* n : order) {
        if (!n->parents.empty()) n->grad = Tensor();
    }
}

}  // namespace vital
