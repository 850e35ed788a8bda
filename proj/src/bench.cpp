#include "clmpt/bench.hpp"

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "clmpt/error.hpp"

namespace clmpt {

namespace {

struct RunReading {
    double seconds = 0.0;
    int64_t peak_rss_kb = 0;
    int64_t messages = 0;
};

int64_t run_training(const BenchWorkload& workload, bool conditional) {
    ModelConfig cfg = workload.model_config;
    cfg.conditional_passing = conditional;
    ClmptModel model = build_model(workload.table, cfg, workload.train_config.seed + 17);
    TrainResult result = train(model, workload.instances, workload.train_config);
    return result.messages_encoded;
}

// One measured run in a forked child: fresh address space, so ru_maxrss
// reflects this run alone. The child reports (maxrss_kb, messages) over a
// pipe; the parent takes the wall clock.
RunReading measure_once(const BenchWorkload& workload, bool conditional) {
    int fds[2];
    if (pipe(fds) != 0) throw Error::io("cost_comparison: pipe failed");

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = fork();
    if (pid < 0) throw Error::io("cost_comparison: fork failed");
    if (pid == 0) {
        close(fds[0]);
        int64_t payload[2] = {0, 0};
        int exit_code = 0;
        try {
            payload[1] = run_training(workload, conditional);
            rusage usage{};
            getrusage(RUSAGE_SELF, &usage);
            payload[0] = static_cast<int64_t>(usage.ru_maxrss);
        } catch (...) {
            exit_code = 1;
        }
        ssize_t written = write(fds[1], payload, sizeof(payload));
        (void)written;
        close(fds[1]);
        _exit(exit_code);
    }

    close(fds[1]);
    int64_t payload[2] = {0, 0};
    ssize_t got = read(fds[0], payload, sizeof(payload));
    close(fds[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    const auto stop = std::chrono::steady_clock::now();
    if (got != sizeof(payload) || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw Error::training("cost_comparison: measured run failed");

    RunReading reading;
    reading.seconds = std::chrono::duration<double>(stop - start).count();
    reading.peak_rss_kb = payload[0];
    reading.messages = payload[1];
    return reading;
}

} // namespace

std::map<std::string, ShapeMessageCounts> shape_message_counts(const ComplexEmbeddingTable& table,
                                                               const ModelConfig& config,
                                                               uint64_t seed) {
    std::map<std::string, ShapeMessageCounts> out;
    const int64_t n_entities = table.entity_emb.dim(0);
    const int64_t n_relations = table.relation_emb.dim(0);

    ModelConfig on = config;
    on.conditional_passing = true;
    ModelConfig off = config;
    off.conditional_passing = false;
    ClmptModel model_on = build_model(table, on, seed);
    ClmptModel model_off = build_model(table, off, seed);

    NoGradGuard no_grad;
    for (const auto& shape : canonical_shapes()) {
        const auto [nc, nr] = shape_arity(shape);
        ShapeBindings b;
        for (int i = 0; i < nc; ++i) b.constants.push_back(static_cast<EntityId>(i % n_entities));
        for (int i = 0; i < nr; ++i) b.relations.push_back(static_cast<RelationId>(i % n_relations));
        auto q = instantiate_shape(shape, b);

        ShapeMessageCounts counts;
        for (const auto& cq : q.disjuncts) {
            ForwardStats s_on, s_off;
            clmpt_forward(cq, model_on, &s_on);
            clmpt_forward(cq, model_off, &s_off);
            counts.conditional += s_on.messages_encoded;
            counts.unconditional += s_off.messages_encoded;
        }
        out[shape] = counts;
    }
    return out;
}

CostComparison cost_comparison(const BenchWorkload& workload) {
    CostComparison result;
    result.per_shape_messages =
        shape_message_counts(workload.table, workload.model_config, workload.train_config.seed);

    if (workload.train_config.steps == 0 || workload.instances.empty()) {
        // Nothing to measure; everything is exactly zero.
        return result;
    }
    if (workload.repetitions < 1) throw Error::config("cost_comparison: repetitions must be >= 1");

    double sec_c = 0.0, sec_w = 0.0;
    int64_t rss_c = 0, rss_w = 0;
    for (int rep = 0; rep < workload.repetitions; ++rep) {
        const RunReading with_c = measure_once(workload, true);
        const RunReading without_c = measure_once(workload, false);
        sec_c += with_c.seconds;
        sec_w += without_c.seconds;
        rss_c += with_c.peak_rss_kb;
        rss_w += without_c.peak_rss_kb;
        result.messages_conditional = with_c.messages;
        result.messages_unconditional = without_c.messages;
    }
    const double reps = static_cast<double>(workload.repetitions);
    result.seconds_conditional = sec_c / reps;
    result.seconds_unconditional = sec_w / reps;
    result.peak_rss_conditional_kb = static_cast<int64_t>(rss_c / workload.repetitions);
    result.peak_rss_unconditional_kb = static_cast<int64_t>(rss_w / workload.repetitions);

    if (result.seconds_unconditional > 0.0)
        result.time_reduction =
            (result.seconds_unconditional - result.seconds_conditional) / result.seconds_unconditional;
    if (result.peak_rss_unconditional_kb > 0)
        result.memory_reduction =
            static_cast<double>(result.peak_rss_unconditional_kb - result.peak_rss_conditional_kb) /
            static_cast<double>(result.peak_rss_unconditional_kb);
    return result;
}

nlohmann::json CostComparison::to_json() const {
    nlohmann::json per_shape = nlohmann::json::object();
    for (const auto& [shape, counts] : per_shape_messages)
        per_shape[shape] = {{"conditional", counts.conditional},
                            {"unconditional", counts.unconditional}};
    return {{"memory_reduction", memory_reduction},
            {"time_reduction", time_reduction},
            {"seconds_conditional", seconds_conditional},
            {"seconds_unconditional", seconds_unconditional},
            {"peak_rss_conditional_kb", peak_rss_conditional_kb},
            {"peak_rss_unconditional_kb", peak_rss_unconditional_kb},
            {"messages_conditional", messages_conditional},
            {"messages_unconditional", messages_unconditional},
            {"per_shape_messages", per_shape}};
}

} // namespace clmpt
