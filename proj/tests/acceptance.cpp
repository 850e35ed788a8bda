// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Work files land in ./acceptance-work.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "clmpt/bench.hpp"
#include "clmpt/error.hpp"
#include "clmpt/model.hpp"
#include "clmpt/pipelines.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace clmpt;
using clmpt::testing::cvec;
using clmpt::testing::enumerate_answers;
using clmpt::testing::model_grad_check;
using clmpt::testing::random_vec;
using clmpt::testing::unit_vec;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw CheckFailure(msg);
}

std::string work_dir;

ClmptModel make_tiny_model(int64_t entities, int64_t relations, int64_t rank, uint64_t seed) {
    ModelConfig cfg;
    cfg.encoder.width = 2 * rank;
    cfg.encoder.ffn_hidden = 4 * rank;
    cfg.encoder.heads = 2;
    cfg.negatives = static_cast<int>(std::min<int64_t>(16, entities - 1));
    return build_model(init_embedding_table(entities, relations, rank, seed), cfg, seed + 1);
}

// ------------------------------------------------------------ criterion 1

void criterion_gradients(std::ostream& note) {
    Rng rng(0xC1);
    auto rt = [&rng](std::vector<int64_t> shape, double scale = 1.0) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        std::vector<double> v(static_cast<size_t>(n));
        for (double& x : v) x = scale * rng.normal();
        return Tensor(std::move(shape), std::move(v));
    };
    using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
    struct Case {
        const char* name;
        Fn fn;
        std::function<std::vector<Tensor>()> inputs;
    };
    const std::vector<Case> cases = {
        {"add", [](const auto& in) { return sum_all(add(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({3, 4}), rt({3, 4})}; }},
        {"sub", [](const auto& in) { return sum_all(mul(sub(in[0], in[1]), in[0])); },
         [&] { return std::vector<Tensor>{rt({5}), rt({5})}; }},
        {"mul", [](const auto& in) { return sum_all(mul(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({2, 3}), rt({2, 3})}; }},
        {"scalar_mul", [](const auto& in) { return sum_all(scalar_mul(in[0], -1.3)); },
         [&] { return std::vector<Tensor>{rt({6})}; }},
        {"matmul", [](const auto& in) { return sum_all(matmul(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({3, 4}), rt({4, 2})}; }},
        {"transpose", [](const auto& in) { return sum_all(mul(transpose(in[0]), in[1])); },
         [&] { return std::vector<Tensor>{rt({3, 4}), rt({4, 3})}; }},
        {"add_rowwise", [](const auto& in) { return sum_all(sigmoid(add_rowwise(in[0], in[1]))); },
         [&] { return std::vector<Tensor>{rt({3, 4}), rt({4})}; }},
        {"mul_rowwise", [](const auto& in) { return sum_all(mul_rowwise(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({3, 4}), rt({4})}; }},
        {"complex_hadamard", [](const auto& in) { return sum_all(complex_hadamard(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({2, 6}), rt({2, 6})}; }},
        {"conjugate",
         [](const auto& in) { return sum_all(complex_hadamard(conjugate(in[0]), in[1])); },
         [&] { return std::vector<Tensor>{rt({6}), rt({6})}; }},
        {"exp", [](const auto& in) { return sum_all(exp(in[0])); },
         [&] { return std::vector<Tensor>{rt({5}, 0.5)}; }},
        {"log", [](const auto& in) { return sum_all(log(in[0])); },
         [&] {
             Tensor t = rt({5});
             for (double& x : t.raw_values()) x = 0.2 + std::abs(x);
             return std::vector<Tensor>{t};
         }},
        {"sigmoid", [](const auto& in) { return sum_all(sigmoid(in[0])); },
         [&] { return std::vector<Tensor>{rt({6})}; }},
        {"softmax", [](const auto& in) { return sum_all(mul(softmax_lastdim(in[0]), in[1])); },
         [&] { return std::vector<Tensor>{rt({2, 5}), rt({2, 5})}; }},
        {"logsumexp", [](const auto& in) { return sum_all(logsumexp_lastdim(in[0])); },
         [&] { return std::vector<Tensor>{rt({3, 6})}; }},
        {"layer_norm", [](const auto& in) { return sum_all(mul(layer_norm_lastdim(in[0]), in[1])); },
         [&] { return std::vector<Tensor>{rt({2, 8}), rt({2, 8})}; }},
        {"mean", [](const auto& in) { return sum_all(mul(mean(in[0], 0), in[1])); },
         [&] { return std::vector<Tensor>{rt({4, 3}), rt({3})}; }},
        {"sum", [](const auto& in) { return sum_all(mul(sum(in[0], 1), in[1])); },
         [&] { return std::vector<Tensor>{rt({4, 3}), rt({4})}; }},
        {"max", [](const auto& in) { return sum_all(mul(max(in[0], 0), in[1])); },
         [&] {
             // Keep entries well separated so the finite-difference step
             // cannot cross an argmax tie.
             Tensor t = rt({4, 3});
             auto& v = t.raw_values();
             for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 7) + 0.1 * v[i] / 10.0;
             return std::vector<Tensor>{t, rt({3})};
         }},
        {"sum_all", [](const auto& in) { return sum_all(sigmoid(in[0])); },
         [&] { return std::vector<Tensor>{rt({7})}; }},
        {"l2_norm", [](const auto& in) { return sum_all(l2_norm_lastdim(in[0])); },
         [&] { return std::vector<Tensor>{rt({3, 5})}; }},
        {"cube_norm_penalty", [](const auto& in) { return cube_norm_penalty(in[0]); },
         [&] { return std::vector<Tensor>{rt({3, 6})}; }},
        {"cosine_similarity",
         [](const auto& in) { return sum_all(cosine_similarity(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({3, 7}), rt({3, 7})}; }},
        {"cosine_similarity_rows",
         [](const auto& in) { return sum_all(cosine_similarity_rows(in[0], in[1])); },
         [&] { return std::vector<Tensor>{rt({4, 6}), rt({6})}; }},
        {"reshape", [](const auto& in) { return sum_all(sigmoid(reshape(in[0], {6}))); },
         [&] { return std::vector<Tensor>{rt({2, 3})}; }},
        {"stack_rows",
         [](const auto& in) { return sum_all(sigmoid(stack_rows({in[0], in[1]}))); },
         [&] { return std::vector<Tensor>{rt({5}), rt({5})}; }},
        {"concat_rows",
         [](const auto& in) { return sum_all(sigmoid(concat_rows({in[0], in[1]}))); },
         [&] { return std::vector<Tensor>{rt({2, 3}), rt({3, 3})}; }},
        {"concat_cols",
         [](const auto& in) { return sum_all(sigmoid(concat_cols({in[0], in[1]}))); },
         [&] { return std::vector<Tensor>{rt({3, 2}), rt({3, 4})}; }},
        {"concat_vecs",
         [](const auto& in) { return sum_all(sigmoid(concat_vecs({in[0], in[1]}))); },
         [&] { return std::vector<Tensor>{rt({3}), rt({5})}; }},
        {"slice_rows", [](const auto& in) { return sum_all(slice_rows(in[0], 1, 2)); },
         [&] { return std::vector<Tensor>{rt({4, 3})}; }},
        {"slice_cols", [](const auto& in) { return sum_all(slice_cols(in[0], 1, 2)); },
         [&] { return std::vector<Tensor>{rt({3, 5})}; }},
        {"slice_vec", [](const auto& in) { return sum_all(slice_vec(in[0], 2, 3)); },
         [&] { return std::vector<Tensor>{rt({7})}; }},
        {"row", [](const auto& in) { return sum_all(row(in[0], 1)); },
         [&] { return std::vector<Tensor>{rt({3, 4})}; }},
        {"gather_rows", [](const auto& in) { return sum_all(gather_rows(in[0], {2, 0, 2})); },
         [&] { return std::vector<Tensor>{rt({4, 3})}; }},
        {"cross_entropy_mean",
         [](const auto& in) { return cross_entropy_mean(in[0], {1, 0, 2}); },
         [&] { return std::vector<Tensor>{rt({3, 4})}; }},
        {"neg_log_softmax_first", [](const auto& in) { return neg_log_softmax_first(in[0]); },
         [&] { return std::vector<Tensor>{rt({6})}; }},
    };

    double worst = 0.0;
    for (const Case& c : cases)
        for (int rep = 0; rep < 20; ++rep) {
            const double err = grad_check(c.fn, c.inputs());
            require(err < 1e-4, std::string(c.name) + " grad error " + std::to_string(err));
            worst = std::max(worst, err);
        }

    ClmptModel model = make_tiny_model(8, 3, 3, 0xC1A);
    auto q = instantiate_shape("2i", {{1, 4}, {0, 2}});
    const double e2e = model_grad_check(
        model, q.disjuncts[0], 2, {5, 6},
        {"var.y", "var.x", "encoder.block0.wq", "encoder.block1.ffn_w1", "entity_emb",
         "relation_emb"});
    require(e2e < 1e-3, "end-to-end grad error " + std::to_string(e2e));
    note << "max primitive err " << worst << ", end-to-end err " << e2e;
}

// ------------------------------------------------------------ criterion 2

void criterion_closed_form(std::ostream& note) {
    Rng rng(0xC2);
    const int64_t width = 16;  // complex dimension 8
    int64_t comparisons = 0;
    for (int pair = 0; pair < 200; ++pair) {
        Tensor r = unit_vec(rng, width);
        Tensor t = unit_vec(rng, width);
        Tensor m = encode_message(t, r, Direction::TailToHead, false);
        double norm = 0.0;
        for (double x : m.values()) norm += x * x;
        norm = std::sqrt(norm);
        require(norm > 0.0, "degenerate message norm");
        std::vector<double> mhat(m.values());
        for (double& x : mhat) x /= norm;
        const double best = score(cvec(mhat), r, t).scalar_value();
        for (int cand = 0; cand < 1000; ++cand) {
            const double challenger = score(unit_vec(rng, width), r, t).scalar_value();
            require(best >= challenger, "candidate beat the closed-form maximizer");
            ++comparisons;
        }
    }
    note << comparisons << " comparisons, zero violations";
}

// ------------------------------------------------------------ criterion 3

void criterion_bitwise(std::ostream& note) {
    Rng rng(0xC3);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor emb = random_vec(rng, 16);
        Tensor rel = random_vec(rng, 16);
        for (Direction d : {Direction::TailToHead, Direction::HeadToTail}) {
            Tensor pos = encode_message(emb, rel, d, false);
            Tensor neg = encode_message(emb, rel, d, true);
            for (size_t i = 0; i < pos.values().size(); ++i)
                require(neg.values()[i] == -pos.values()[i], "antisymmetry not bitwise");
        }
    }

    ParamStore store;
    EncoderConfig ec;
    ec.width = 8;
    ec.heads = 2;
    ec.ffn_hidden = 16;
    Rng init(0xC3F);
    auto enc = TransformerEncoder::create(store, "enc", ec, init);
    const Pooling pools[3] = {Pooling::Mean, Pooling::Sum, Pooling::Max};
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(rng.uniform_below(4));
        std::vector<Tensor> messages;
        for (int i = 0; i < k; ++i) messages.push_back(random_vec(rng, 8));
        Tensor node = random_vec(rng, 8);
        const Pooling pooling = pools[trial % 3];
        Tensor base = node_update(messages, node, enc, pooling);
        std::vector<Tensor> shuffled = messages;
        rng.shuffle(shuffled);
        Tensor permuted = node_update(shuffled, node, enc, pooling);
        require(base.values() == permuted.values(), "permutation invariance not bitwise");
    }
    note << "1000 antisymmetry + 1000 permutation cases, all bitwise";
}

// ------------------------------------------------------------ criterion 4

void criterion_conditional(std::ostream& note) {
    // Structural contract on all canonical shapes.
    for (const auto& shape : canonical_shapes()) {
        ClmptModel model = make_tiny_model(12, 4, 4, 0xC4);
        ClmptModel loose = make_tiny_model(12, 4, 4, 0xC4);
        loose.config.conditional_passing = false;

        const auto [nc, nr] = shape_arity(shape);
        ShapeBindings b;
        for (int i = 0; i < nc; ++i) b.constants.push_back(static_cast<EntityId>(i + 1));
        for (int i = 0; i < nr; ++i) b.relations.push_back(static_cast<RelationId>(i));
        auto q = instantiate_shape(shape, b);

        for (const auto& cq : q.disjuncts) {
            ForwardStats stats;
            auto states = clmpt_forward_all(cq, model, &stats);
            require(stats.messages_encoded == expected_message_count(cq, true),
                    shape + ": conditional message count mismatch");
            for (const auto& node : cq.nodes) {
                if (node.kind != NodeKind::Constant) continue;
                const Tensor expect = row(model.store.get("entity_emb"), node.entity);
                require(states.node_states[static_cast<size_t>(node.node_id)].values() ==
                            expect.values(),
                        shape + ": constant state changed");
            }
            ForwardStats loose_stats;
            clmpt_forward(cq, loose, &loose_stats);
            require(loose_stats.messages_encoded == expected_message_count(cq, false),
                    shape + ": unconditional message count mismatch");
            require(stats.messages_encoded < loose_stats.messages_encoded,
                    shape + ": conditional mode did not reduce messages");
        }
    }

    // Reference workload: measured wall-clock advantage plus the message
    // sub-report. The magnitude is hardware-dependent; only the sign is
    // asserted.
    KnowledgeGraph kg = clmpt::testing::cycle_graph(60, {1, 7, 13, 22});
    KnowledgeGraph empty(kg.entity_count(), kg.relation_count(), {});
    BenchWorkload workload;
    workload.table = init_embedding_table(60, 4, 8, 0xC4B);
    for (const std::string shape : {"2i", "3i", "3in", "pi"}) {
        auto batch = sample_instances(kg, empty, shape, 4, 0xC4C);
        workload.instances.insert(workload.instances.end(), batch.begin(), batch.end());
    }
    workload.model_config.negatives = 16;
    workload.model_config.encoder.width = 16;
    workload.model_config.encoder.ffn_hidden = 64;
    workload.train_config.steps = 30;
    workload.train_config.batch = 8;
    workload.train_config.seed = 0xC4D;
    workload.repetitions = 3;
    CostComparison cost = cost_comparison(workload);
    for (const auto& [shape, counts] : cost.per_shape_messages)
        require(counts.conditional < counts.unconditional,
                shape + ": expected fewer conditional messages");
    require(cost.messages_conditional < cost.messages_unconditional,
            "workload message counts not reduced");
    require(cost.time_reduction > 0.0, "conditional passing was not faster on the workload");

    // Zero-step workload reports exact zeros.
    BenchWorkload idle = workload;
    idle.train_config.steps = 0;
    CostComparison none = cost_comparison(idle);
    require(none.time_reduction == 0.0 && none.memory_reduction == 0.0,
            "zero-step workload must report zero reductions");

    std::ostringstream s;
    s << "time_reduction " << cost.time_reduction << ", memory_reduction "
      << cost.memory_reduction << ", messages " << cost.messages_conditional << " vs "
      << cost.messages_unconditional;
    note << s.str();
}

// ------------------------------------------------------------ criterion 5

void criterion_oracle(std::ostream& note) {
    Rng rng(0xC5);
    int done = 0;
    while (done < 500) {
        const int n = 10 + static_cast<int>(rng.uniform_below(41));  // <= 50 entities
        std::set<Triple> triples;
        const int m = n + static_cast<int>(rng.uniform_below(3 * n));
        while (static_cast<int>(triples.size()) < m)
            triples.insert({static_cast<EntityId>(rng.uniform_below(n)),
                            static_cast<RelationId>(rng.uniform_below(4)),
                            static_cast<EntityId>(rng.uniform_below(n))});
        KnowledgeGraph kg(n, 4, {triples.begin(), triples.end()});

        const auto& shapes = canonical_shapes();  // all have <= 3 variables
        const std::string shape = shapes[rng.uniform_below(shapes.size())];
        const auto [nc, nr] = shape_arity(shape);
        ShapeBindings b;
        for (int i = 0; i < nc; ++i)
            b.constants.push_back(static_cast<EntityId>(rng.uniform_below(n)));
        for (int i = 0; i < nr; ++i)
            b.relations.push_back(static_cast<RelationId>(rng.uniform_below(4)));
        auto q = instantiate_shape(shape, b);
        for (const auto& cq : q.disjuncts)
            require(answer_conjunctive(kg, cq) == enumerate_answers(kg, cq),
                    shape + ": propagation disagrees with enumeration");
        ++done;
    }

    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 5 + static_cast<int>(rng.uniform_below(60));
        std::vector<double> scores(static_cast<size_t>(n));
        for (double& s : scores) s = rng.uniform() < 0.3 ? 0.25 : rng.uniform();
        const EntityId target = static_cast<EntityId>(rng.uniform_below(n));
        std::vector<EntityId> others;
        for (int e = 0; e < n; ++e)
            if (e != target && rng.uniform() < 0.2) others.push_back(static_cast<EntityId>(e));

        std::set<EntityId> excluded(others.begin(), others.end());
        excluded.insert(target);
        int64_t naive = 1;
        for (int e = 0; e < n; ++e) {
            if (excluded.count(static_cast<EntityId>(e))) continue;
            if (scores[static_cast<size_t>(e)] > scores[static_cast<size_t>(target)] ||
                (scores[static_cast<size_t>(e)] == scores[static_cast<size_t>(target)] &&
                 e < target))
                ++naive;
        }
        require(filtered_rank(scores, target, others) == naive, "filtered_rank recount mismatch");
    }
    note << "500 query equivalences + 1000 rank recounts";
}

// ------------------------------------------------------------ criterion 6

// Deterministic synthetic KG: 200 entities, 10 branching offset relations
// plus a sprinkle of noise edges, written as TSV for the real pipeline.
std::string write_learning_fixture(const std::string& path) {
    const int n = 200;
    const std::pair<int, int> offsets[10] = {{1, 101}, {3, 53},  {7, 107}, {11, 61}, {17, 117},
                                             {23, 73}, {31, 131}, {45, 95}, {59, 109}, {83, 133}};
    Rng rng(0xF1C7);
    std::set<std::string> lines;
    for (int r = 0; r < 10; ++r) {
        for (int i = 0; i < n; ++i) {
            for (int off : {offsets[r].first, offsets[r].second})
                if (rng.uniform() < 0.45)
                    lines.insert("e" + std::to_string(i) + "\tr" + std::to_string(r) + "\te" +
                                 std::to_string((i + off) % n));
        }
        for (int j = 0; j < 20; ++j)
            lines.insert("e" + std::to_string(rng.uniform_below(n)) + "\tr" + std::to_string(r) +
                         "\te" + std::to_string(rng.uniform_below(n)));
    }
    std::ofstream out(path);
    for (const auto& line : lines) out << line << '\n';
    return path;
}

void criterion_learning_signal(std::ostream& note) {
    namespace pl = clmpt::pipelines;
    const std::string base = work_dir + "/learning";
    write_learning_fixture(work_dir + "/learning-kg.tsv");

    pl::run_ingest(pl::resolve_config(pl::ingest_defaults(), {},
                                      {{"triples", work_dir + "/learning-kg.tsv"},
                                       {"out", base + "/data"},
                                       {"seed", 11},
                                       {"ratios", {0.9, 0.05, 0.05}}}));

    const auto pre = pl::run_pretrain(pl::resolve_config(
        pl::pretrain_defaults(), {},
        {{"data", base + "/data"}, {"out", base + "/pre"}, {"seed", 12}, {"rank", 32},
         {"epochs", 300}, {"lr", 1e-2}, {"batch", 128}}));
    const double pretrain_mrr = pre.at("holdout_mrr_1p").get<double>();
    require(pretrain_mrr > 0.3, "pretrained 1p MRR " + std::to_string(pretrain_mrr) + " <= 0.3");

    pl::run_gen_queries(pl::resolve_config(pl::gen_queries_defaults(), {},
                                           {{"data", base + "/data"},
                                            {"out", base + "/qtrain"},
                                            {"split", "train"},
                                            {"count", 500},
                                            {"seed", 13},
                                            {"retry_budget", 1000}}));
    pl::run_gen_queries(pl::resolve_config(pl::gen_queries_defaults(), {},
                                           {{"data", base + "/data"},
                                            {"out", base + "/qtest"},
                                            {"split", "test"},
                                            {"shapes", {"2i", "2p"}},
                                            {"count", 50},
                                            {"seed", 14},
                                            {"retry_budget", 2000}}));

    pl::json train_cfg{{"data", base + "/data"},
                       {"queries", base + "/qtrain/queries-train.jsonl"},
                       {"predictor", base + "/pre/predictor.ckpt"},
                       {"out", base + "/model"},
                       {"seed", 15},
                       {"steps", 2000},
                       {"batch", 16},
                       {"lr", 1e-3},
                       {"temperature", 0.05},
                       {"dropout", 0.1}};
    pl::run_train(pl::resolve_config(pl::train_defaults(), {}, train_cfg));

    pl::json untrained_cfg = train_cfg;
    untrained_cfg["out"] = base + "/model0";
    untrained_cfg["steps"] = 0;
    pl::run_train(pl::resolve_config(pl::train_defaults(), {}, untrained_cfg));

    auto eval_model = [&](const std::string& model, const std::string& out) {
        return pl::run_eval(pl::resolve_config(pl::eval_defaults(), {},
                                               {{"data", base + "/data"},
                                                {"queries", base + "/qtest/queries-test.jsonl"},
                                                {"model", model},
                                                {"out", out}}));
    };
    const auto trained = eval_model(base + "/model/model.ckpt", base + "/eval");
    const auto untrained = eval_model(base + "/model0/model.ckpt", base + "/eval0");

    // Analytic uniform-ranking baseline per shape: for each (query, hard
    // answer) pair with m unfiltered candidates, E[1/rank] = H(m)/m.
    auto instances = read_instances_jsonl(base + "/qtest/queries-test.jsonl");
    std::map<std::string, std::pair<double, int64_t>> baseline_acc;
    for (const auto& inst : instances) {
        for (EntityId hard : inst.hard_answers) {
            (void)hard;
            const int64_t m = 200 - static_cast<int64_t>(inst.easy_answers.size()) -
                              static_cast<int64_t>(inst.hard_answers.size()) + 1;
            double h = 0.0;
            for (int64_t r = 1; r <= m; ++r) h += 1.0 / static_cast<double>(r);
            auto& acc = baseline_acc[inst.shape];
            acc.first += h / static_cast<double>(m);
            acc.second += 1;
        }
    }

    std::ostringstream detail;
    for (const std::string shape : {"2i", "2p"}) {
        const double t = trained.at("shapes").at(shape).at("mrr").get<double>();
        const double u = untrained.at("shapes").at(shape).at("mrr").get<double>();
        const double b = baseline_acc.at(shape).first / static_cast<double>(baseline_acc.at(shape).second);
        detail << shape << ": trained " << t << ", untrained " << u << ", uniform " << b << "; ";
        require(t > 3.0 * b, shape + ": trained MRR " + std::to_string(t) +
                                 " is not 3x the uniform baseline " + std::to_string(b));
    }

    // Reference thresholds pinned from the committed fixture seed. The
    // untrained model already answers near the ceiling on 2i (residual
    // blocks pass the closed-form messages straight through), so the
    // learning signal shows up as a large gain on the compositional 2p
    // shape and preserved strength on 2i.
    const double trained_2i = trained.at("shapes").at("2i").at("mrr").get<double>();
    const double trained_2p = trained.at("shapes").at("2p").at("mrr").get<double>();
    const double untrained_2p = untrained.at("shapes").at("2p").at("mrr").get<double>();
    require(trained_2p > untrained_2p, "training did not improve 2p over the untrained model");
    require(trained_2i > 0.60, "trained 2i MRR below the pinned reference floor 0.60");
    require(trained_2p > 0.42, "trained 2p MRR below the pinned reference floor 0.42");

    note << detail.str() << "pretrain 1p MRR " << pretrain_mrr;
}

// ------------------------------------------------------------ criterion 7

void criterion_nce(std::ostream& note) {
    for (int k : {1, 4, 127}) {
        Tensor pred = cvec({1.0, 0.0});
        Tensor pos = cvec({2.0, 0.0});
        std::vector<double> negs;
        for (int i = 0; i < k; ++i) {
            negs.push_back(3.0);
            negs.push_back(0.0);
        }
        Tensor neg({k, 2}, std::move(negs));
        const double loss = nce_loss(pred, pos, neg, 0.05).scalar_value();
        const double expect = std::log(static_cast<double>(k) + 1.0);
        require(std::abs(loss - expect) < 1e-9,
                "K=" + std::to_string(k) + ": |loss - log(K+1)| = " +
                    std::to_string(std::abs(loss - expect)));
    }
    note << "symmetric NCE equals log(K+1) within 1e-9 for K in {1,4,127}";
}

// ------------------------------------------------------------ criterion 8

void criterion_dnf(std::ostream& note) {
    Rng rng(0xC8);
    ClmptModel model = make_tiny_model(40, 6, 8, 0xC8A);
    int instances = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::string shape = trial % 2 ? "2u" : "up";
        const auto [nc, nr] = shape_arity(shape);
        ShapeBindings b;
        for (int i = 0; i < nc; ++i)
            b.constants.push_back(static_cast<EntityId>(rng.uniform_below(40)));
        for (int i = 0; i < nr; ++i)
            b.relations.push_back(static_cast<RelationId>(rng.uniform_below(6)));
        EFO1Query q = instantiate_shape(shape, b);

        AnswerResult merged = answer(q, model);
        std::vector<AnswerResult> parts;
        for (const auto& cq : q.disjuncts) parts.push_back(answer(EFO1Query{{cq}}, model));
        for (size_t e = 0; e < merged.scores.size(); ++e) {
            double expect = -1e300;
            for (const auto& p : parts) expect = std::max(expect, p.scores[e]);
            require(std::abs(merged.scores[e] - expect) <= 1e-9,
                    shape + ": merged score differs from per-disjunct max");
        }
        ++instances;
    }
    note << instances << " random 2u/up instances, scores equal per-disjunct max";
}

// ------------------------------------------------------------ criterion 9

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "missing file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_reproducibility(std::ostream& note) {
    namespace pl = clmpt::pipelines;
    const std::string base = work_dir + "/repro";

    // Small end-to-end dataset through the real pipeline functions.
    KnowledgeGraph kg = clmpt::testing::cycle_graph(60, {1, 7, 13, 22}, 0.8, 99);
    Vocabulary evoc, rvoc;
    for (int i = 0; i < 60; ++i) evoc.get_or_add("e" + std::to_string(i));
    for (int r = 0; r < 4; ++r) rvoc.get_or_add("r" + std::to_string(r));
    fs::create_directories(base);
    write_triples_tsv(base + "/kg.tsv", kg, evoc, rvoc);

    pl::run_ingest(pl::resolve_config(
        pl::ingest_defaults(), {},
        {{"triples", base + "/kg.tsv"}, {"out", base + "/data"}, {"seed", 3}}));
    pl::run_pretrain(pl::resolve_config(pl::pretrain_defaults(), {},
                                        {{"data", base + "/data"}, {"out", base + "/pre"},
                                         {"seed", 4}, {"rank", 8}, {"epochs", 30}}));
    pl::run_gen_queries(pl::resolve_config(pl::gen_queries_defaults(), {},
                                           {{"data", base + "/data"},
                                            {"out", base + "/q"},
                                            {"split", "train"},
                                            {"count", 10},
                                            {"seed", 5},
                                            {"retry_budget", 1000}}));
    pl::run_gen_queries(pl::resolve_config(pl::gen_queries_defaults(), {},
                                           {{"data", base + "/data"},
                                            {"out", base + "/qe"},
                                            {"split", "valid"},
                                            {"shapes", {"1p", "2i"}},
                                            {"count", 5},
                                            {"seed", 6},
                                            {"retry_budget", 2000}}));

    auto run_once = [&](const std::string& tag) {
        pl::run_train(pl::resolve_config(pl::train_defaults(), {},
                                         {{"data", base + "/data"},
                                          {"queries", base + "/q/queries-train.jsonl"},
                                          {"predictor", base + "/pre/predictor.ckpt"},
                                          {"out", base + "/" + tag},
                                          {"seed", 7},
                                          {"steps", 40},
                                          {"batch", 8},
                                          {"negatives", 16}}));
        pl::run_eval(pl::resolve_config(pl::eval_defaults(), {},
                                        {{"data", base + "/data"},
                                         {"queries", base + "/qe/queries-valid.jsonl"},
                                         {"model", base + "/" + tag + "/model.ckpt"},
                                         {"out", base + "/" + tag + "-eval"}}));
    };
    run_once("run1");
    run_once("run2");

    require(slurp(base + "/run1/model.ckpt") == slurp(base + "/run2/model.ckpt"),
            "model checkpoints differ between identical runs");
    require(slurp(base + "/run1/train-report.json") == slurp(base + "/run2/train-report.json"),
            "train reports differ between identical runs");
    require(slurp(base + "/run1-eval/report.json") == slurp(base + "/run2-eval/report.json"),
            "metric reports differ between identical runs");
    note << "checkpoints and reports bitwise identical across reruns";
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(std::ostream&)> run;
    double budget_seconds;
};

} // namespace

int main() {
    work_dir = "acceptance-work";
    fs::remove_all(work_dir);
    fs::create_directories(work_dir);

    const std::vector<Criterion> criteria = {
        {1, "gradient fidelity", criterion_gradients, 30.0},
        {2, "closed-form maximizer", criterion_closed_form, 10.0},
        {3, "bitwise antisymmetry and permutation invariance", criterion_bitwise, 0.0},
        {4, "conditional-passing contract", criterion_conditional, 0.0},
        {5, "oracle equivalence", criterion_oracle, 0.0},
        {6, "learning signal at desk scale", criterion_learning_signal, 600.0},
        {7, "NCE exactness", criterion_nce, 0.0},
        {8, "DNF answer merging", criterion_dnf, 0.0},
        {9, "train reproducibility", criterion_reproducibility, 0.0},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        std::ostringstream detail;
        const auto start = std::chrono::steady_clock::now();
        bool ok = true;
        std::string error;
        try {
            c.run(detail);
        } catch (const std::exception& e) {
            ok = false;
            error = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && c.budget_seconds > 0.0 && elapsed > c.budget_seconds) {
            ok = false;
            error = "runtime " + std::to_string(elapsed) + "s exceeds " +
                    std::to_string(c.budget_seconds) + "s";
        }
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", c.id,
                    c.name.c_str(), ok ? detail.str().c_str() : error.c_str(), elapsed);
        std::fflush(stdout);
        failures += !ok;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures ? 1 : 0;
}
