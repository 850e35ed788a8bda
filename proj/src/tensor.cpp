#include "clmpt/tensor.hpp"

#include <unordered_set>

#include "clmpt/error.hpp"

namespace clmpt {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values, bool requires_grad) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw Error::shape("tensor extents must be positive");
        n *= d;
    }
    if (n != static_cast<int64_t>(values.size()))
        throw Error::shape("value count " + std::to_string(values.size()) +
                           " does not match shape product " + std::to_string(n));
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                  requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, bool requires_grad) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v),
                  requires_grad);
}

const std::vector<int64_t>& Tensor::shape() const {
    if (!node_) throw Error::contract("use of an undefined tensor");
    return node_->shape;
}

int64_t Tensor::numel() const { return node_ ? node_->numel() : 0; }

int64_t Tensor::rank() const { return static_cast<int64_t>(shape().size()); }

int64_t Tensor::dim(int64_t i) const {
    const auto& s = shape();
    if (i < 0) i += static_cast<int64_t>(s.size());
    if (i < 0 || i >= static_cast<int64_t>(s.size()))
        throw Error::shape("dimension index out of range");
    return s[static_cast<size_t>(i)];
}

const std::vector<double>& Tensor::values() const {
    if (!node_) throw Error::contract("use of an undefined tensor");
    return node_->values;
}

std::vector<double>& Tensor::raw_values() {
    if (!node_) throw Error::contract("use of an undefined tensor");
    return node_->values;
}

double Tensor::scalar_value() const {
    if (numel() != 1) throw Error::contract("scalar_value on a non-scalar tensor");
    return node_->values[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
    if (!node_) throw Error::contract("use of an undefined tensor");
    node_->requires_grad = rg;
}

Tensor Tensor::grad() const {
    if (!node_) throw Error::contract("use of an undefined tensor");
    if (node_->grad.size() == node_->values.size())
        return Tensor(node_->shape, node_->grad, false);
    return Tensor::zeros(node_->shape, false);
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
    if (!node_) return {};
    return Tensor(node_->shape, node_->values, false);
}

void backward(const Tensor& scalar_output) {
    if (!scalar_output.defined() || scalar_output.numel() != 1)
        throw Error::contract("backward requires a one-element output");
    detail::Node* root = scalar_output.node().get();
    if (!root->requires_grad)
        throw Error::contract("backward on an output that requires no gradient");

    // Post-order DFS over grad-requiring parents; reversed it gives the
    // topological order for the backward sweep.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        bool descended = false;
        while (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) n->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backprop) {
            for (const auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backprop(*n);
        }
    }
}

} // namespace clmpt
