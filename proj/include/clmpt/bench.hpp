#pragma once
// Cost comparison between conditional and unconditional message passing:
// identical seeded training workloads run with the flag on and off, timed
// and measured for peak resident memory, plus a deterministic per-shape
// message-count sub-report.

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "clmpt/model.hpp"

namespace clmpt {

struct BenchWorkload {
    ComplexEmbeddingTable table;       // starting predictor
    std::vector<QueryInstance> instances;
    ModelConfig model_config;          // conditional_passing is overridden per run
    TrainConfig train_config;
    int repetitions = 3;
};

struct ShapeMessageCounts {
    int64_t conditional = 0;
    int64_t unconditional = 0;
};

struct CostComparison {
    // (usage_woC - usage_C) / usage_woC and the same for wall-clock time,
    // averaged over the repetitions.
    double memory_reduction = 0.0;
    double time_reduction = 0.0;

    double seconds_conditional = 0.0;
    double seconds_unconditional = 0.0;
    int64_t peak_rss_conditional_kb = 0;
    int64_t peak_rss_unconditional_kb = 0;

    // Deterministic sub-report: messages encoded over the full workload and
    // per canonical shape for a single forward pass.
    int64_t messages_conditional = 0;
    int64_t messages_unconditional = 0;
    std::map<std::string, ShapeMessageCounts> per_shape_messages;

    nlohmann::json to_json() const;
};

// Runs each configuration `repetitions` times in a fresh child process (so
// peak-RSS readings do not bleed across runs) and averages the readings.
// A zero-step workload skips measurement and reports exact zeros.
CostComparison cost_comparison(const BenchWorkload& workload);

// The per-shape single-forward message counts alone (no training, no fork).
std::map<std::string, ShapeMessageCounts> shape_message_counts(const ComplexEmbeddingTable& table,
                                                               const ModelConfig& config,
                                                               uint64_t seed);

} // namespace clmpt
