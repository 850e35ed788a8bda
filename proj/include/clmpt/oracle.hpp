#pragma once
// Exact symbolic answering of EFO-1 queries by graph traversal, plus the
// query-instance generator that splits answers into easy (derivable on the
// observed graph) and hard (require at least one missing edge).

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "clmpt/kg.hpp"
#include "clmpt/query.hpp"

namespace clmpt {

struct QueryInstance {
    EFO1Query query;
    std::string shape;  // canonical shape name, or "custom"
    std::vector<EntityId> easy_answers;  // sorted
    std::vector<EntityId> hard_answers;  // sorted, disjoint from easy
};

// Exact answer set of the free variable. Candidate sets per variable are
// narrowed to an arc-consistent fixpoint, then survivors are verified by
// backtracking over variable assignments. Negated atoms constrain by set
// complement over the full entity set.
std::vector<EntityId> answer_conjunctive(const KnowledgeGraph& kg,
                                         const ConjunctiveQueryGraph& cq);

// Union over disjuncts.
std::vector<EntityId> answer_query(const KnowledgeGraph& kg, const EFO1Query& query);

struct SampleConfig {
    int retry_budget = 100;  // per requested instance
};

// Grounds `count` instances of the shape by seeded random walks on full_kg,
// then computes easy = answers(observed), hard = answers(full) \ easy.
// Instances with an empty hard set are resampled within the retry budget.
std::vector<QueryInstance> sample_instances(const KnowledgeGraph& full_kg,
                                            const KnowledgeGraph& observed_kg,
                                            const std::string& shape, int count,
                                            uint64_t rng_seed,
                                            const SampleConfig& config = {});

// JSONL helpers over the query_graph serialization.
void write_instances_jsonl(const std::string& path, const std::vector<QueryInstance>& instances);
std::vector<QueryInstance> read_instances_jsonl(const std::string& path);

} // namespace clmpt
