#include "clmpt/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clmpt/error.hpp"
#include "clmpt/rng.hpp"

namespace clmpt {

namespace {

uint64_t pair_key(EntityId node, RelationId relation) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(node)) << 32) |
           static_cast<uint32_t>(relation);
}

const std::vector<EntityId> kEmptyIds;
const std::vector<std::pair<RelationId, EntityId>> kEmptyEdges;

} // namespace

EntityId Vocabulary::get_or_add(const std::string& name) {
    auto it = name_to_id_.find(name);
    if (it != name_to_id_.end()) return it->second;
    const EntityId id = static_cast<EntityId>(id_to_name_.size());
    name_to_id_.emplace(name, id);
    id_to_name_.push_back(name);
    return id;
}

int64_t Vocabulary::find(const std::string& name) const {
    auto it = name_to_id_.find(name);
    return it == name_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::name(int64_t id) const {
    if (id < 0 || id >= size())
        throw Error::index("vocabulary id out of range: " + std::to_string(id));
    return id_to_name_[static_cast<size_t>(id)];
}

uint64_t Vocabulary::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](char c) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    };
    for (const auto& s : id_to_name_) {
        for (char c : s) mix(c);
        mix('\n');
    }
    return h;
}

KnowledgeGraph::KnowledgeGraph(int64_t entity_count, int64_t relation_count,
                               std::vector<Triple> triples)
    : entity_count_(entity_count), relation_count_(relation_count) {
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    triples_ = std::move(triples);

    out_edges_.resize(static_cast<size_t>(entity_count_));
    in_edges_.resize(static_cast<size_t>(entity_count_));
    for (const Triple& t : triples_) {
        if (t.head < 0 || t.head >= entity_count_ || t.tail < 0 || t.tail >= entity_count_)
            throw Error::index("triple references entity id outside [0, entity_count)");
        if (t.relation < 0 || t.relation >= relation_count_)
            throw Error::index("triple references relation id outside [0, relation_count)");
        fwd_index_[pair_key(t.head, t.relation)].push_back(t.tail);
        rev_index_[pair_key(t.tail, t.relation)].push_back(t.head);
        out_edges_[static_cast<size_t>(t.head)].emplace_back(t.relation, t.tail);
        in_edges_[static_cast<size_t>(t.tail)].emplace_back(t.relation, t.head);
    }
    // triples_ is sorted, so index lists come out sorted already; the sort
    // below keeps that an invariant rather than an accident.
    for (auto& [k, v] : fwd_index_) std::sort(v.begin(), v.end());
    for (auto& [k, v] : rev_index_) std::sort(v.begin(), v.end());
    for (auto& v : out_edges_) std::sort(v.begin(), v.end());
    for (auto& v : in_edges_) std::sort(v.begin(), v.end());
}

bool KnowledgeGraph::contains(const Triple& t) const {
    return std::binary_search(triples_.begin(), triples_.end(), t);
}

void KnowledgeGraph::check_node(EntityId node) const {
    if (node < 0 || node >= entity_count_)
        throw Error::index("entity id out of range: " + std::to_string(node));
}

void KnowledgeGraph::check_relation(RelationId relation) const {
    if (relation < 0 || relation >= relation_count_)
        throw Error::index("relation id out of range: " + std::to_string(relation));
}

const std::vector<EntityId>& KnowledgeGraph::neighbors(EntityId node, RelationId relation,
                                                       Direction direction) const {
    check_node(node);
    check_relation(relation);
    const auto& index = direction == Direction::HeadToTail ? fwd_index_ : rev_index_;
    auto it = index.find(pair_key(node, relation));
    return it == index.end() ? kEmptyIds : it->second;
}

const std::vector<std::pair<RelationId, EntityId>>& KnowledgeGraph::outgoing(EntityId node) const {
    check_node(node);
    return out_edges_[static_cast<size_t>(node)];
}

const std::vector<std::pair<RelationId, EntityId>>& KnowledgeGraph::incoming(EntityId node) const {
    check_node(node);
    return in_edges_[static_cast<size_t>(node)];
}

LoadedGraph load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open triple file: " + path);

    Vocabulary entities;
    Vocabulary relations;
    std::vector<Triple> triples;

    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        const size_t tab1 = line.find('\t');
        const size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        const size_t tab3 = tab2 == std::string::npos ? std::string::npos : line.find('\t', tab2 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos || tab3 != std::string::npos)
            throw Error::parse("malformed triple at line " + std::to_string(line_no) +
                               ": expected head<TAB>relation<TAB>tail");
        const std::string head = line.substr(0, tab1);
        const std::string rel = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string tail = line.substr(tab2 + 1);
        if (head.empty() || rel.empty() || tail.empty())
            throw Error::parse("empty field at line " + std::to_string(line_no));

        triples.push_back({entities.get_or_add(head), relations.get_or_add(rel),
                           entities.get_or_add(tail)});
    }
    if (triples.empty()) throw Error::parse("triple file has no triples: " + path);

    KnowledgeGraph kg(entities.size(), relations.size(), std::move(triples));
    return {std::move(kg), std::move(entities), std::move(relations)};
}

GraphSplit split_edges(const KnowledgeGraph& kg, const SplitRatios& ratios, uint64_t seed) {
    const double parts[3] = {ratios.train, ratios.valid, ratios.test};
    double sum = 0.0;
    for (double p : parts) {
        if (p <= 0.0) throw Error::config("split ratios must be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error::config("split ratios must sum to 1, got " + std::to_string(sum));

    std::vector<Triple> pool = kg.triples();
    Rng rng(seed);
    rng.shuffle(pool);

    const int64_t n = static_cast<int64_t>(pool.size());
    int64_t counts[3];
    double frac[3];
    int64_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = parts[i] * static_cast<double>(n);
        counts[i] = static_cast<int64_t>(std::floor(exact));
        frac[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {  // largest remainder, ties to the earlier split
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (frac[i] > frac[best]) best = i;
        ++counts[best];
        frac[best] = -1.0;
        ++assigned;
    }

    std::vector<Triple> sets[3];
    int64_t offset = 0;
    for (int i = 0; i < 3; ++i) {
        sets[i].assign(pool.begin() + offset, pool.begin() + offset + counts[i]);
        offset += counts[i];
    }

    // Relation coverage: a relation unseen in train would have an untrained
    // embedding, so swap violating valid/test edges against train edges whose
    // relation can spare an occurrence.
    std::map<RelationId, int64_t> train_rel_count;
    for (const Triple& t : sets[0]) ++train_rel_count[t.relation];
    for (int part = 1; part < 3; ++part) {
        for (Triple& edge : sets[part]) {
            if (train_rel_count[edge.relation] > 0) continue;
            bool swapped = false;
            for (Triple& candidate : sets[0]) {
                if (train_rel_count[candidate.relation] >= 2) {
                    --train_rel_count[candidate.relation];
                    ++train_rel_count[edge.relation];
                    std::swap(edge, candidate);
                    swapped = true;
                    break;
                }
            }
            if (!swapped) {
                // No spare edge to trade: move it into train outright.
                sets[0].push_back(edge);
                ++train_rel_count[edge.relation];
                edge = {-1, -1, -1};  // tombstone, erased below
            }
        }
        auto& v = sets[part];
        v.erase(std::remove(v.begin(), v.end(), Triple{-1, -1, -1}), v.end());
    }

    GraphSplit out;
    out.train = KnowledgeGraph(kg.entity_count(), kg.relation_count(), std::move(sets[0]));
    out.valid = KnowledgeGraph(kg.entity_count(), kg.relation_count(), std::move(sets[1]));
    out.test = KnowledgeGraph(kg.entity_count(), kg.relation_count(), std::move(sets[2]));
    return out;
}

KnowledgeGraph merge_graphs(const std::vector<const KnowledgeGraph*>& parts) {
    if (parts.empty()) throw Error::contract("merge_graphs needs at least one graph");
    std::vector<Triple> triples;
    for (const KnowledgeGraph* g : parts) {
        if (g->entity_count() != parts[0]->entity_count() ||
            g->relation_count() != parts[0]->relation_count())
            throw Error::contract("merge_graphs: vocabulary sizes differ");
        triples.insert(triples.end(), g->triples().begin(), g->triples().end());
    }
    return KnowledgeGraph(parts[0]->entity_count(), parts[0]->relation_count(), std::move(triples));
}

void write_triples_tsv(const std::string& path, const KnowledgeGraph& kg,
                       const Vocabulary& entities, const Vocabulary& relations) {
    std::ofstream out(path);
    if (!out) throw Error::io("cannot write triple file: " + path);
    for (const Triple& t : kg.triples())
        out << entities.name(t.head) << '\t' << relations.name(t.relation) << '\t'
            << entities.name(t.tail) << '\n';
}

} // namespace clmpt
