#pragma once
// Named parameter store with AdamW moments. A single writer updates the
// store; read-only snapshots may be shared for evaluation.

#include <string>
#include <unordered_map>
#include <vector>

#include "clmpt/tensor.hpp"

namespace clmpt {

class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    // Registration order; every iteration over the store uses it so updates
    // stay deterministic.
    const std::vector<std::string>& names() const { return names_; }

    int64_t step_count() const { return step_; }
    void set_step_count(int64_t s) { step_ = s; }

    void zero_grads();

    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    Moments& moments(const std::string& name);

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, Tensor> params_;
    std::unordered_map<std::string, Moments> moments_;
    int64_t step_ = 0;
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Decoupled-weight-decay Adam step over the listed parameters (all names
// when `names` is empty), using the gradients accumulated on each tensor.
// Decay is applied directly to the parameter, not through the moments.
void adamw_step(ParamStore& store, const AdamWConfig& config,
                const std::vector<std::string>& names = {});

} // namespace clmpt
