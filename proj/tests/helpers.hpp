#pragma once
// Shared fixtures and oracles for the unit and acceptance suites.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "clmpt/model.hpp"
#include "clmpt/rng.hpp"

namespace clmpt::testing {

inline Tensor cvec(std::vector<double> v) {
    const int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
}

inline Tensor random_vec(Rng& rng, int64_t n, double scale = 1.0) {
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = scale * rng.normal();
    return cvec(std::move(v));
}

inline Tensor unit_vec(Rng& rng, int64_t n) {
    Tensor t = random_vec(rng, n);
    double norm = 0.0;
    for (double x : t.values()) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : t.raw_values()) x /= norm;
    return t;
}

// Cyclic toy KG: i --r_k--> (i + offset_k) mod n, optionally subsampled.
// The pattern is exactly representable by complex phase embeddings.
inline KnowledgeGraph cycle_graph(int n, const std::vector<int>& offsets, double density = 1.0,
                                  uint64_t seed = 0) {
    Rng rng(seed);
    std::vector<Triple> triples;
    for (int r = 0; r < static_cast<int>(offsets.size()); ++r)
        for (int i = 0; i < n; ++i)
            if (density >= 1.0 || rng.uniform() < density)
                triples.push_back({static_cast<EntityId>(i), static_cast<RelationId>(r),
                                   static_cast<EntityId>((i + offsets[static_cast<size_t>(r)]) % n)});
    return KnowledgeGraph(n, static_cast<int64_t>(offsets.size()), std::move(triples));
}

// Naive reference answerer: enumerate every assignment of the free and
// existential variables and test all atoms directly. Exponential; test-only.
inline std::vector<EntityId> enumerate_answers(const KnowledgeGraph& kg,
                                               const ConjunctiveQueryGraph& cq) {
    std::vector<int32_t> vars;
    for (const auto& n : cq.nodes)
        if (n.kind != NodeKind::Constant) vars.push_back(n.node_id);
    std::vector<EntityId> assign(cq.nodes.size(), -1);
    for (const auto& n : cq.nodes)
        if (n.kind == NodeKind::Constant) assign[static_cast<size_t>(n.node_id)] = n.entity;

    std::vector<EntityId> answers;
    std::vector<char> seen(static_cast<size_t>(kg.entity_count()), 0);
    const int64_t n_ent = kg.entity_count();
    std::function<void(size_t)> rec = [&](size_t i) {
        if (i == vars.size()) {
            for (const auto& e : cq.edges) {
                const bool present = kg.contains({assign[static_cast<size_t>(e.head_node)],
                                                  e.relation,
                                                  assign[static_cast<size_t>(e.tail_node)]});
                if (present == e.negated) return;
            }
            seen[static_cast<size_t>(assign[static_cast<size_t>(cq.free_node())])] = 1;
            return;
        }
        for (EntityId v = 0; v < n_ent; ++v) {
            assign[static_cast<size_t>(vars[i])] = v;
            rec(i + 1);
        }
        assign[static_cast<size_t>(vars[i])] = -1;
    };
    rec(0);
    for (EntityId e = 0; e < n_ent; ++e)
        if (seen[static_cast<size_t>(e)]) answers.push_back(e);
    return answers;
}

// Finite-difference check of d(nce_loss(forward(cq), ...))/d(parameter) for
// the listed parameters, perturbing the model's own tensors in place.
inline double model_grad_check(ClmptModel& model, const ConjunctiveQueryGraph& cq,
                               EntityId positive, const std::vector<int64_t>& negatives,
                               const std::vector<std::string>& probes, double step = 1e-5) {
    auto loss_fn = [&]() {
        Tensor pred = clmpt_forward(cq, model);
        return nce_loss(pred, row(model.store.get("entity_emb"), positive),
                        gather_rows(model.store.get("entity_emb"), negatives), 0.5);
    };

    model.store.zero_grads();
    backward(loss_fn());
    std::map<std::string, std::vector<double>> analytic;
    for (const auto& name : probes) analytic[name] = model.store.get(name).grad().values();
    model.store.zero_grads();

    double worst = 0.0;
    for (const auto& name : probes) {
        auto& vals = model.store.get(name).raw_values();
        for (size_t c = 0; c < vals.size(); ++c) {
            const double saved = vals[c];
            double f_plus, f_minus;
            {
                NoGradGuard no_grad;
                vals[c] = saved + step;
                f_plus = loss_fn().scalar_value();
                vals[c] = saved - step;
                f_minus = loss_fn().scalar_value();
            }
            vals[c] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[name][c];
            const double err =
                std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace clmpt::testing
