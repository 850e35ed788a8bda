#pragma once
// Minimal dense-tensor autodiff core. Tensors are handles onto tape nodes;
// every primitive records its inputs and a backward closure, and
// backward() replays the tape in reverse topological order. Values are
// 64-bit throughout. One tape per training step; nodes are freed when the
// last handle drops.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace clmpt {

namespace detail {

struct Node {
    std::vector<int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily by backward()
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Propagates this node's grad into the parents' grad buffers.
    std::function<void(Node&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(values.size()); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

} // namespace detail

class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int64_t> shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const;
    int64_t numel() const;
    int64_t rank() const;
    int64_t dim(int64_t i) const;

    const std::vector<double>& values() const;
    // In-place mutation (optimizer updates, initialization). Must not be
    // called on a tensor that participates in a live tape.
    std::vector<double>& raw_values();
    double scalar_value() const;

    bool requires_grad() const;
    void set_requires_grad(bool rg);

    // Gradient accumulated by the last backward(); zeros if untouched.
    Tensor grad() const;
    void zero_grad();

    // Value copy detached from any tape.
    Tensor detach() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a one-element output.
void backward(const Tensor& scalar_output);

// Scoped "do not record" switch for inference paths.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

} // namespace clmpt
