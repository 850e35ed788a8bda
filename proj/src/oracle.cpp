#include "clmpt/oracle.hpp"

#include <algorithm>
#include <fstream>

#include "clmpt/error.hpp"
#include "clmpt/rng.hpp"

namespace clmpt {

namespace {

using CandidateSet = std::vector<char>;  // indexed by entity id

int64_t popcount(const CandidateSet& s) {
    int64_t n = 0;
    for (char c : s) n += c;
    return n;
}

// Does any h in cand satisfy (h, r, t) in kg?
bool has_support_head(const KnowledgeGraph& kg, const CandidateSet& cand, RelationId r,
                      EntityId t) {
    for (EntityId h : kg.neighbors(t, r, Direction::TailToHead))
        if (cand[static_cast<size_t>(h)]) return true;
    return false;
}

bool has_support_tail(const KnowledgeGraph& kg, const CandidateSet& cand, RelationId r,
                      EntityId h) {
    for (EntityId t : kg.neighbors(h, r, Direction::HeadToTail))
        if (cand[static_cast<size_t>(t)]) return true;
    return false;
}

// Arc-consistency pass for a single atom; returns true if anything changed.
// For a positive atom r(u, v): keep v iff some candidate head supports it,
// and symmetrically for u. For a negated atom the support is an assignment
// that makes the pair absent from the graph.
bool revise_edge(const KnowledgeGraph& kg, const AtomEdge& e, CandidateSet& head_cand,
                 CandidateSet& tail_cand, bool head_fixed, bool tail_fixed) {
    bool changed = false;
    const int64_t n_heads = popcount(head_cand);
    const int64_t n_tails = popcount(tail_cand);

    if (!tail_fixed) {
        for (size_t t = 0; t < tail_cand.size(); ++t) {
            if (!tail_cand[t]) continue;
            bool ok;
            if (!e.negated) {
                ok = has_support_head(kg, head_cand, e.relation, static_cast<EntityId>(t));
            } else {
                // Some candidate head must miss this tail. That fails only
                // when every candidate head links to it.
                int64_t linked = 0;
                for (EntityId h : kg.neighbors(static_cast<EntityId>(t), e.relation,
                                               Direction::TailToHead))
                    if (head_cand[static_cast<size_t>(h)]) ++linked;
                ok = linked < n_heads;
            }
            if (!ok) {
                tail_cand[t] = 0;
                changed = true;
            }
        }
    }
    if (!head_fixed) {
        for (size_t h = 0; h < head_cand.size(); ++h) {
            if (!head_cand[h]) continue;
            bool ok;
            if (!e.negated) {
                ok = has_support_tail(kg, tail_cand, e.relation, static_cast<EntityId>(h));
            } else {
                int64_t linked = 0;
                for (EntityId t : kg.neighbors(static_cast<EntityId>(h), e.relation,
                                               Direction::HeadToTail))
                    if (tail_cand[static_cast<size_t>(t)]) ++linked;
                ok = linked < n_tails;
            }
            if (!ok) {
                head_cand[h] = 0;
                changed = true;
            }
        }
    }
    return changed;
}

bool atom_holds(const KnowledgeGraph& kg, const AtomEdge& e, EntityId h, EntityId t) {
    const bool present = kg.contains({h, e.relation, t});
    return e.negated ? !present : present;
}

// Backtracking over the variable nodes in `order`, candidates restricted to
// the propagated sets. Constant assignments are fixed up front.
bool satisfiable(const KnowledgeGraph& kg, const ConjunctiveQueryGraph& cq,
                 const std::vector<CandidateSet>& cands, std::vector<EntityId>& assign,
                 const std::vector<int32_t>& order, size_t depth) {
    if (depth == order.size()) return true;
    const int32_t node = order[depth];
    const auto& cand = cands[static_cast<size_t>(node)];
    for (size_t value = 0; value < cand.size(); ++value) {
        if (!cand[value]) continue;
        assign[static_cast<size_t>(node)] = static_cast<EntityId>(value);
        bool consistent = true;
        for (const AtomEdge& e : cq.edges) {
            const EntityId h = assign[static_cast<size_t>(e.head_node)];
            const EntityId t = assign[static_cast<size_t>(e.tail_node)];
            if (h < 0 || t < 0) continue;  // other endpoint not assigned yet
            if (!atom_holds(kg, e, h, t)) {
                consistent = false;
                break;
            }
        }
        if (consistent && satisfiable(kg, cq, cands, assign, order, depth + 1)) return true;
    }
    assign[static_cast<size_t>(node)] = -1;
    return false;
}

} // namespace

std::vector<EntityId> answer_conjunctive(const KnowledgeGraph& kg,
                                         const ConjunctiveQueryGraph& cq) {
    cq.validate(kg.entity_count(), kg.relation_count());
    const size_t n_nodes = cq.nodes.size();
    const size_t n_entities = static_cast<size_t>(kg.entity_count());

    std::vector<CandidateSet> cands(n_nodes);
    for (const TermNode& node : cq.nodes) {
        auto& c = cands[static_cast<size_t>(node.node_id)];
        if (node.kind == NodeKind::Constant) {
            c.assign(n_entities, 0);
            c[static_cast<size_t>(node.entity)] = 1;
        } else {
            c.assign(n_entities, 1);
        }
    }

    // Propagate to fixpoint.
    bool changed = true;
    while (changed) {
        changed = false;
        for (const AtomEdge& e : cq.edges) {
            const bool head_fixed = cq.nodes[static_cast<size_t>(e.head_node)].kind == NodeKind::Constant;
            const bool tail_fixed = cq.nodes[static_cast<size_t>(e.tail_node)].kind == NodeKind::Constant;
            changed |= revise_edge(kg, e, cands[static_cast<size_t>(e.head_node)],
                                   cands[static_cast<size_t>(e.tail_node)], head_fixed, tail_fixed);
        }
    }

    const int32_t free = cq.free_node();
    std::vector<int32_t> exist_order;
    for (const TermNode& node : cq.nodes)
        if (node.kind == NodeKind::Existential) exist_order.push_back(node.node_id);

    std::vector<EntityId> assign(n_nodes, -1);
    for (const TermNode& node : cq.nodes)
        if (node.kind == NodeKind::Constant) assign[static_cast<size_t>(node.node_id)] = node.entity;

    // Verify each surviving free-variable candidate by search.
    std::vector<EntityId> answers;
    const auto& free_cand = cands[static_cast<size_t>(free)];
    for (size_t e = 0; e < n_entities; ++e) {
        if (!free_cand[e]) continue;
        assign[static_cast<size_t>(free)] = static_cast<EntityId>(e);
        bool consistent = true;
        for (const AtomEdge& edge : cq.edges) {
            const EntityId h = assign[static_cast<size_t>(edge.head_node)];
            const EntityId t = assign[static_cast<size_t>(edge.tail_node)];
            if (h < 0 || t < 0) continue;
            if (!atom_holds(kg, edge, h, t)) {
                consistent = false;
                break;
            }
        }
        if (consistent && satisfiable(kg, cq, cands, assign, exist_order, 0))
            answers.push_back(static_cast<EntityId>(e));
        for (int32_t v : exist_order) assign[static_cast<size_t>(v)] = -1;
    }
    return answers;
}

std::vector<EntityId> answer_query(const KnowledgeGraph& kg, const EFO1Query& query) {
    std::set<EntityId> out;
    for (const auto& cq : query.disjuncts)
        for (EntityId e : answer_conjunctive(kg, cq)) out.insert(e);
    return {out.begin(), out.end()};
}

// ---------------------------------------------------------------- sampling

namespace {

struct Walker {
    const KnowledgeGraph& kg;
    Rng& rng;

    // One step of a walk: a uniformly chosen relation incident to `node` in
    // the given direction, then a uniform endpoint through that relation.
    std::pair<RelationId, EntityId> step(EntityId node, Direction dir) {
        const auto& edges = dir == Direction::HeadToTail ? kg.outgoing(node) : kg.incoming(node);
        if (edges.empty()) throw Error::sampling("walk reached a node without incident edges");
        std::vector<RelationId> rels;
        for (const auto& [r, other] : edges)
            if (rels.empty() || rels.back() != r) rels.push_back(r);
        const RelationId rel = rels[rng.uniform_below(rels.size())];
        const auto& others = kg.neighbors(node, rel, dir);
        return {rel, others[rng.uniform_below(others.size())]};
    }

    EntityId random_entity() {
        return static_cast<EntityId>(rng.uniform_below(static_cast<uint64_t>(kg.entity_count())));
    }

    EntityId random_entity_with_out_edges() {
        for (int attempt = 0; attempt < 256; ++attempt) {
            const EntityId e = random_entity();
            if (!kg.outgoing(e).empty()) return e;
        }
        throw Error::sampling("graph has too few nodes with outgoing edges");
    }

    RelationId random_out_relation(EntityId node) {
        const auto& edges = kg.outgoing(node);
        if (edges.empty())
            return static_cast<RelationId>(rng.uniform_below(static_cast<uint64_t>(kg.relation_count())));
        std::vector<RelationId> rels;
        for (const auto& [r, other] : edges)
            if (rels.empty() || rels.back() != r) rels.push_back(r);
        return rels[rng.uniform_below(rels.size())];
    }

    // Anchor for a negated atom: sampled independently of the walked
    // witness, so the witness itself is not excluded by the negation.
    std::pair<EntityId, RelationId> negated_anchor() {
        const EntityId e = random_entity_with_out_edges();
        return {e, random_out_relation(e)};
    }
};

// Grounds one candidate binding for the shape. Chains walk forward from a
// uniformly sampled anchor; intersection branches complete backward from the
// shared node. Returns false when the walk degenerates (duplicate atoms).
bool ground_shape(const std::string& shape, Walker& w, ShapeBindings& b) {
    b.constants.clear();
    b.relations.clear();
    auto fwd = [&](EntityId from) { return w.step(from, Direction::HeadToTail); };
    auto bwd = [&](EntityId from) { return w.step(from, Direction::TailToHead); };

    if (shape == "1p") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, y] = fwd(a);
        b = {{a}, {r1}};
        return true;
    }
    if (shape == "2p") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r2, y] = fwd(x1);
        b = {{a}, {r1, r2}};
        return true;
    }
    if (shape == "3p") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r2, x2] = fwd(x1);
        if (w.kg.outgoing(x2).empty()) return false;
        auto [r3, y] = fwd(x2);
        b = {{a}, {r1, r2, r3}};
        return true;
    }
    if (shape == "2i" || shape == "2u") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, y] = fwd(a);
        auto [r2, bb] = bwd(y);
        if (bb == a && r2 == r1) return false;  // both branches are the same atom
        b = {{a, bb}, {r1, r2}};
        return true;
    }
    if (shape == "2in") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, y] = fwd(a);
        auto [bb, r2] = w.negated_anchor();
        if (bb == a && r2 == r1) return false;  // contradiction r(a,y) & !r(a,y)
        b = {{a, bb}, {r1, r2}};
        return true;
    }
    if (shape == "3i") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, y] = fwd(a);
        auto [r2, b2] = bwd(y);
        auto [r3, b3] = bwd(y);
        if ((b2 == a && r2 == r1) || (b3 == a && r3 == r1) || (b3 == b2 && r3 == r2))
            return false;
        b = {{a, b2, b3}, {r1, r2, r3}};
        return true;
    }
    if (shape == "3in") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, y] = fwd(a);
        auto [r2, b2] = bwd(y);
        if (b2 == a && r2 == r1) return false;
        auto [b3, r3] = w.negated_anchor();
        if ((b3 == a && r3 == r1) || (b3 == b2 && r3 == r2)) return false;
        b = {{a, b2, b3}, {r1, r2, r3}};
        return true;
    }
    if (shape == "pi") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r2, y] = fwd(x1);
        auto [r3, bb] = bwd(y);
        if (bb == x1 && r3 == r2) return false;
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    if (shape == "pin") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r2, y] = fwd(x1);
        auto [bb, r3] = w.negated_anchor();
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    if (shape == "pni") {
        // r1(a,x1) & !r2(x1,y) & r3(b,y): y is witnessed through the
        // positive r3 branch; r2 is drawn from the walked x1's relations.
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        const RelationId r2 = w.random_out_relation(x1);
        const EntityId bb = w.random_entity_with_out_edges();
        auto [r3, y] = fwd(bb);
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    if (shape == "ip") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        auto [r2, bb] = bwd(x1);
        if (bb == a && r2 == r1) return false;
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r3, y] = fwd(x1);
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    if (shape == "inp") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        auto [bb, r2] = w.negated_anchor();
        if (bb == a && r2 == r1) return false;
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r3, y] = fwd(x1);
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    if (shape == "up") {
        const EntityId a = w.random_entity_with_out_edges();
        auto [r1, x1] = fwd(a);
        auto [r2, bb] = bwd(x1);
        if (bb == a && r2 == r1) return false;
        if (w.kg.outgoing(x1).empty()) return false;
        auto [r3, y] = fwd(x1);
        b = {{a, bb}, {r1, r2, r3}};
        return true;
    }
    throw Error::config("unknown query shape: " + shape);
}

std::vector<EntityId> set_difference_sorted(const std::vector<EntityId>& a,
                                            const std::vector<EntityId>& b) {
    std::vector<EntityId> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

} // namespace

std::vector<QueryInstance> sample_instances(const KnowledgeGraph& full_kg,
                                            const KnowledgeGraph& observed_kg,
                                            const std::string& shape, int count,
                                            uint64_t rng_seed, const SampleConfig& config) {
    for (const Triple& t : observed_kg.triples())
        if (!full_kg.contains(t))
            throw Error::contract("observed graph is not a subgraph of the full graph");

    const Rng base(rng_seed);
    std::vector<QueryInstance> out;
    out.reserve(static_cast<size_t>(count));

    for (int i = 0; i < count; ++i) {
        Rng rng = base.fork(static_cast<uint64_t>(i));
        Walker walker{full_kg, rng};
        bool produced = false;
        for (int attempt = 0; attempt < config.retry_budget && !produced; ++attempt) {
            ShapeBindings bindings;
            if (!ground_shape(shape, walker, bindings)) continue;
            EFO1Query query = instantiate_shape(shape, bindings);

            const std::vector<EntityId> full_answers = answer_query(full_kg, query);
            if (full_answers.empty()) continue;
            const std::vector<EntityId> easy = answer_query(observed_kg, query);
            std::vector<EntityId> hard = set_difference_sorted(full_answers, easy);
            if (hard.empty()) continue;

            QueryInstance inst;
            inst.query = std::move(query);
            inst.shape = shape;
            inst.easy_answers = easy;
            inst.hard_answers = std::move(hard);
            out.push_back(std::move(inst));
            produced = true;
        }
        if (!produced)
            throw Error::sampling("retry budget exhausted for shape " + shape +
                                  " (instance " + std::to_string(i) + ")");
    }
    return out;
}

void write_instances_jsonl(const std::string& path, const std::vector<QueryInstance>& instances) {
    std::ofstream outf(path);
    if (!outf) throw Error::io("cannot write instance file: " + path);
    for (const QueryInstance& inst : instances)
        outf << query_to_json(inst.query, inst.shape, inst.easy_answers, inst.hard_answers)
             << '\n';
}

std::vector<QueryInstance> read_instances_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open instance file: " + path);
    std::vector<QueryInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ParsedInstanceJson parsed = query_from_json(line);
        QueryInstance inst;
        inst.query = std::move(parsed.query);
        inst.shape = parsed.shape.value_or("custom");
        inst.easy_answers = std::move(parsed.easy_answers);
        inst.hard_answers = std::move(parsed.hard_answers);
        std::sort(inst.easy_answers.begin(), inst.easy_answers.end());
        std::sort(inst.hard_answers.begin(), inst.hard_answers.end());
        out.push_back(std::move(inst));
    }
    return out;
}

} // namespace clmpt
