#pragma once
// Filtered ranking metrics over hard answers, per-shape aggregation, and
// the conditional-passing cost comparison.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "clmpt/oracle.hpp"

namespace clmpt {

// 1 + |{e not filtered : score(e) > score(target)}|
//   + |{e not filtered : score(e) == score(target), id(e) < id(target)}|.
// `other_answers` (sorted or not) are removed from the ranking pool first.
int64_t filtered_rank(const std::vector<double>& scores, EntityId target,
                      const std::vector<EntityId>& other_answers);

struct ShapeMetrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    int64_t pairs = 0;  // (query, hard answer) pairs aggregated
};

struct MetricsReport {
    std::map<std::string, ShapeMetrics> per_shape;
    // Arithmetic means over the member shapes present in the report.
    double avg_p = 0.0;
    double avg_n = 0.0;
    bool has_avg_p = false;
    bool has_avg_n = false;
    int64_t skipped_empty_hard = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

inline const std::vector<std::string>& epfo_shapes() {
    static const std::vector<std::string> shapes = {"1p", "2p", "3p", "2i", "3i",
                                                    "pi", "ip", "2u", "up"};
    return shapes;
}
inline const std::vector<std::string>& negation_shapes() {
    static const std::vector<std::string> shapes = {"2in", "3in", "inp", "pin", "pni"};
    return shapes;
}

// Per-entity scores for one query instance; higher is better.
using Scorer = std::function<std::vector<double>(const QueryInstance&)>;

// For each hard answer: filter easy answers and the remaining hard answers,
// rank, and aggregate MRR / Hits@K per shape. Instances without hard
// answers are counted and skipped. `workers` > 1 scores instances in
// parallel with a deterministic in-order merge.
MetricsReport evaluate(const std::vector<QueryInstance>& instances, const Scorer& scorer,
                       int workers = 1);

} // namespace clmpt
