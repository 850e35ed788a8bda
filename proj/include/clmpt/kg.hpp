#pragma once
// Knowledge-graph data model: dense-id vocabularies, a deduplicated triple
// set, and bidirectional (node, relation) adjacency indices. Graphs are
// immutable after construction and safe for concurrent reads.

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace clmpt {

using EntityId = int32_t;
using RelationId = int32_t;

struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    auto operator<=>(const Triple&) const = default;
};

enum class Direction { HeadToTail, TailToHead };

// Bijective string <-> dense id mapping, ids assigned in insertion order.
class Vocabulary {
public:
    EntityId get_or_add(const std::string& name);
    // Returns -1 when the name is unknown.
    int64_t find(const std::string& name) const;
    const std::string& name(int64_t id) const;
    int64_t size() const { return static_cast<int64_t>(id_to_name_.size()); }
    const std::vector<std::string>& names() const { return id_to_name_; }

    // FNV-1a over the id-ordered names; used to pin checkpoints to a dataset.
    uint64_t content_hash() const;

private:
    std::unordered_map<std::string, EntityId> name_to_id_;
    std::vector<std::string> id_to_name_;
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(int64_t entity_count, int64_t relation_count,
                   std::vector<Triple> triples);

    int64_t entity_count() const { return entity_count_; }
    int64_t relation_count() const { return relation_count_; }
    const std::vector<Triple>& triples() const { return triples_; }
    int64_t triple_count() const { return static_cast<int64_t>(triples_.size()); }

    bool contains(const Triple& t) const;

    // All tails t with (node, relation, t) when direction is HeadToTail,
    // all heads h with (h, relation, node) otherwise. Sorted ascending.
    const std::vector<EntityId>& neighbors(EntityId node, RelationId relation,
                                           Direction direction) const;

    // Incident (relation, other-endpoint) pairs of a node, used by the
    // instance sampler's random walks. Sorted, deduplicated per pair.
    const std::vector<std::pair<RelationId, EntityId>>& outgoing(EntityId node) const;
    const std::vector<std::pair<RelationId, EntityId>>& incoming(EntityId node) const;

private:
    void check_node(EntityId node) const;
    void check_relation(RelationId relation) const;

    int64_t entity_count_ = 0;
    int64_t relation_count_ = 0;
    std::vector<Triple> triples_;  // sorted, unique
    std::unordered_map<uint64_t, std::vector<EntityId>> fwd_index_;  // (head, rel) -> tails
    std::unordered_map<uint64_t, std::vector<EntityId>> rev_index_;  // (tail, rel) -> heads
    std::vector<std::vector<std::pair<RelationId, EntityId>>> out_edges_;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> in_edges_;
};

struct LoadedGraph {
    KnowledgeGraph kg;
    Vocabulary entities;
    Vocabulary relations;
};

// Reads a UTF-8 TSV with one `head<TAB>relation<TAB>tail` triple per line.
// `#`-prefixed lines are ignored; duplicates collapse to one triple.
LoadedGraph load_triples(const std::string& path);

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

struct GraphSplit {
    KnowledgeGraph train;
    KnowledgeGraph valid;
    KnowledgeGraph test;
};

// Random disjoint partition of the triple set. Every relation present in
// valid/test is kept present in train by swapping violating edges with
// train edges whose relation occurs there at least twice.
GraphSplit split_edges(const KnowledgeGraph& kg, const SplitRatios& ratios, uint64_t seed);

// Union of triple sets over shared vocabularies.
KnowledgeGraph merge_graphs(const std::vector<const KnowledgeGraph*>& parts);

void write_triples_tsv(const std::string& path, const KnowledgeGraph& kg,
                       const Vocabulary& entities, const Vocabulary& relations);

} // namespace clmpt
