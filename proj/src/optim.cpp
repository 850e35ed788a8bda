#include "clmpt/optim.hpp"

#include <cmath>

#include "clmpt/error.hpp"

namespace clmpt {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw Error::contract("parameter already registered: " + name);
    t.set_requires_grad(true);
    names_.push_back(name);
    auto [it, ok] = params_.emplace(name, std::move(t));
    auto& p = it->second;
    moments_[name] = {std::vector<double>(p.values().size(), 0.0),
                      std::vector<double>(p.values().size(), 0.0)};
    return p;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error::contract("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error::contract("unknown parameter: " + name);
    return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) > 0; }

void ParamStore::zero_grads() {
    for (const auto& name : names_) params_.at(name).zero_grad();
}

ParamStore::Moments& ParamStore::moments(const std::string& name) {
    auto it = moments_.find(name);
    if (it == moments_.end()) throw Error::contract("unknown parameter: " + name);
    return it->second;
}

void adamw_step(ParamStore& store, const AdamWConfig& config,
                const std::vector<std::string>& names) {
    const std::vector<std::string>& update = names.empty() ? store.names() : names;
    store.set_step_count(store.step_count() + 1);
    const double t = static_cast<double>(store.step_count());
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);

    for (const std::string& name : update) {
        Tensor& p = store.get(name);
        auto& vals = p.raw_values();
        const Tensor g = p.grad();
        const auto& gv = g.values();
        auto& mom = store.moments(name);
        for (size_t i = 0; i < vals.size(); ++i) {
            const double grad = gv[i];
            if (!std::isfinite(grad))
                throw Error::training("non-finite gradient in parameter " + name);
            mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * grad;
            mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * grad * grad;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            vals[i] -= config.lr * config.weight_decay * vals[i];
            vals[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

} // namespace clmpt
