#include "clmpt/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "clmpt/error.hpp"

namespace clmpt {

int64_t filtered_rank(const std::vector<double>& scores, EntityId target,
                      const std::vector<EntityId>& other_answers) {
    if (target < 0 || static_cast<size_t>(target) >= scores.size())
        throw Error::index("filtered_rank: target id out of range");
    std::vector<char> filtered(scores.size(), 0);
    for (EntityId e : other_answers)
        if (e >= 0 && static_cast<size_t>(e) < scores.size()) filtered[static_cast<size_t>(e)] = 1;
    filtered[static_cast<size_t>(target)] = 1;  // the target itself never competes

    const double target_score = scores[static_cast<size_t>(target)];
    int64_t rank = 1;
    for (size_t e = 0; e < scores.size(); ++e) {
        if (filtered[e]) continue;
        if (scores[e] > target_score) ++rank;
        else if (scores[e] == target_score && static_cast<EntityId>(e) < target) ++rank;
    }
    return rank;
}

namespace {

struct PairResult {
    std::string shape;
    int64_t rank;
};

std::vector<PairResult> score_instance(const QueryInstance& inst, const Scorer& scorer) {
    std::vector<PairResult> out;
    const std::vector<double> scores = scorer(inst);
    for (EntityId hard : inst.hard_answers) {
        std::vector<EntityId> others = inst.easy_answers;
        for (EntityId h : inst.hard_answers)
            if (h != hard) others.push_back(h);
        out.push_back({inst.shape, filtered_rank(scores, hard, others)});
    }
    return out;
}

} // namespace

MetricsReport evaluate(const std::vector<QueryInstance>& instances, const Scorer& scorer,
                       int workers) {
    if (workers < 1) throw Error::config("evaluate: workers must be >= 1");

    std::vector<std::vector<PairResult>> results(instances.size());
    std::vector<size_t> todo;
    MetricsReport report;
    for (size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].hard_answers.empty()) {
            ++report.skipped_empty_hard;
            continue;
        }
        todo.push_back(i);
    }

    if (workers == 1) {
        for (size_t i : todo) results[i] = score_instance(instances[i], scorer);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> cursor{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                while (true) {
                    const size_t slot = cursor.fetch_add(1);
                    if (slot >= todo.size()) return;
                    results[todo[slot]] = score_instance(instances[todo[slot]], scorer);
                }
            });
        for (auto& t : pool) t.join();
    }

    // Deterministic reduction in instance order.
    struct Accum {
        double rr = 0.0;
        int64_t h1 = 0, h3 = 0, h10 = 0, pairs = 0;
    };
    std::map<std::string, Accum> acc;
    for (size_t i : todo)
        for (const PairResult& pr : results[i]) {
            Accum& a = acc[pr.shape];
            a.rr += 1.0 / static_cast<double>(pr.rank);
            a.h1 += pr.rank <= 1;
            a.h3 += pr.rank <= 3;
            a.h10 += pr.rank <= 10;
            a.pairs += 1;
        }

    for (const auto& [shape, a] : acc) {
        ShapeMetrics m;
        m.pairs = a.pairs;
        m.mrr = a.rr / static_cast<double>(a.pairs);
        m.hits1 = static_cast<double>(a.h1) / static_cast<double>(a.pairs);
        m.hits3 = static_cast<double>(a.h3) / static_cast<double>(a.pairs);
        m.hits10 = static_cast<double>(a.h10) / static_cast<double>(a.pairs);
        report.per_shape[shape] = m;
    }

    auto average_over = [&](const std::vector<std::string>& shapes, double& out, bool& has) {
        double total = 0.0;
        int64_t n = 0;
        for (const auto& s : shapes) {
            auto it = report.per_shape.find(s);
            if (it == report.per_shape.end()) continue;
            total += it->second.mrr;
            ++n;
        }
        has = n > 0;
        out = n ? total / static_cast<double>(n) : 0.0;
    };
    average_over(epfo_shapes(), report.avg_p, report.has_avg_p);
    average_over(negation_shapes(), report.avg_n, report.has_avg_n);
    return report;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    for (const auto& [shape, m] : per_shape)
        j["shapes"][shape] = {{"mrr", m.mrr},
                              {"hits1", m.hits1},
                              {"hits3", m.hits3},
                              {"hits10", m.hits10},
                              {"pairs", m.pairs}};
    if (has_avg_p) j["avg_p"] = avg_p;
    if (has_avg_n) j["avg_n"] = avg_n;
    j["skipped_empty_hard"] = skipped_empty_hard;
    return j;
}

std::string MetricsReport::to_table() const {
    std::ostringstream out;
    out << std::left << std::setw(8) << "shape" << std::right << std::setw(9) << "MRR"
        << std::setw(9) << "H@1" << std::setw(9) << "H@3" << std::setw(9) << "H@10"
        << std::setw(8) << "pairs" << '\n';
    auto emit = [&](const std::string& shape) {
        auto it = per_shape.find(shape);
        if (it == per_shape.end()) return;
        const ShapeMetrics& m = it->second;
        out << std::left << std::setw(8) << shape << std::right << std::fixed
            << std::setprecision(4) << std::setw(9) << m.mrr << std::setw(9) << m.hits1
            << std::setw(9) << m.hits3 << std::setw(9) << m.hits10 << std::setw(8) << m.pairs
            << '\n';
    };
    for (const auto& s : epfo_shapes()) emit(s);
    for (const auto& s : negation_shapes()) emit(s);
    for (const auto& [shape, m] : per_shape) {
        const auto& ep = epfo_shapes();
        const auto& ns = negation_shapes();
        if (std::find(ep.begin(), ep.end(), shape) == ep.end() &&
            std::find(ns.begin(), ns.end(), shape) == ns.end())
            emit(shape);
    }
    if (has_avg_p)
        out << std::left << std::setw(8) << "Avg_p" << std::right << std::fixed
            << std::setprecision(4) << std::setw(9) << avg_p << '\n';
    if (has_avg_n)
        out << std::left << std::setw(8) << "Avg_n" << std::right << std::fixed
            << std::setprecision(4) << std::setw(9) << avg_n << '\n';
    return out.str();
}

} // namespace clmpt
