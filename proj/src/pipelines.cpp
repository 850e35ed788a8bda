#include "clmpt/pipelines.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "clmpt/bench.hpp"
#include "clmpt/checkpoint.hpp"
#include "clmpt/error.hpp"
#include "clmpt/model.hpp"

namespace clmpt::pipelines {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write " + path);
    out << text;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error::parse("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

std::string prepare_out_dir(const json& cfg) {
    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    write_json(out + "/config.json", cfg);
    return out;
}

void write_vocab(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot write " + path);
    for (const auto& name : vocab.names()) out << name << '\n';
}

Vocabulary read_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open vocabulary file " + path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        vocab.get_or_add(line);
    }
    return vocab;
}

// Triple TSV loader against fixed vocabularies (split files reuse the ids
// assigned at ingestion).
KnowledgeGraph load_split_tsv(const std::string& path, const Vocabulary& entities,
                              const Vocabulary& relations) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open split file " + path);
    std::vector<Triple> triples;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw Error::parse(path + ": malformed triple at line " + std::to_string(line_no));
        const int64_t h = entities.find(line.substr(0, t1));
        const int64_t r = relations.find(line.substr(t1 + 1, t2 - t1 - 1));
        const int64_t t = entities.find(line.substr(t2 + 1));
        if (h < 0 || r < 0 || t < 0)
            throw Error::parse(path + ": unknown name at line " + std::to_string(line_no));
        triples.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r),
                           static_cast<EntityId>(t)});
    }
    return KnowledgeGraph(entities.size(), relations.size(), std::move(triples));
}

void check_vocab_hashes(const json& metadata, const DataBundle& data, const std::string& what) {
    const uint64_t eh = data.entities.content_hash();
    const uint64_t rh = data.relations.content_hash();
    if (metadata.value("entity_vocab_hash", eh) != eh ||
        metadata.value("relation_vocab_hash", rh) != rh)
        throw Error::config(what + ": checkpoint/vocabulary hash mismatch with the data directory");
}

ModelConfig model_config_from(const json& cfg, int64_t rank) {
    ModelConfig mc;
    mc.pooling = pooling_from_name(cfg.at("pooling").get<std::string>());
    mc.predictor_trainable = cfg.at("predictor_trainable").get<bool>();
    mc.conditional_passing = cfg.at("conditional_passing").get<bool>();
    mc.temperature = cfg.at("temperature").get<double>();
    mc.negatives = cfg.at("negatives").get<int>();
    mc.encoder.width = 2 * rank;
    mc.encoder.layers = cfg.at("encoder_layers").get<int>();
    mc.encoder.heads = cfg.at("encoder_heads").get<int>();
    mc.encoder.ffn_hidden = cfg.at("ffn_hidden").get<int64_t>();
    mc.encoder.dropout = cfg.at("dropout").get<double>();
    return mc;
}

Scorer oracle_scorer(const KnowledgeGraph& full) {
    return [&full](const QueryInstance& inst) {
        std::vector<double> scores(static_cast<size_t>(full.entity_count()), 0.0);
        for (EntityId e : answer_query(full, inst.query)) scores[static_cast<size_t>(e)] = 1.0;
        return scores;
    };
}

} // namespace

DataBundle load_data_dir(const std::string& dir) {
    DataBundle data;
    data.entities = read_vocab(dir + "/entities.txt");
    data.relations = read_vocab(dir + "/relations.txt");
    data.train = load_split_tsv(dir + "/train.tsv", data.entities, data.relations);
    data.valid = load_split_tsv(dir + "/valid.tsv", data.entities, data.relations);
    data.test = load_split_tsv(dir + "/test.tsv", data.entities, data.relations);
    return data;
}

// ----------------------------------------------------------------- ingest

json ingest_defaults() {
    return {{"triples", ""},
            {"out", ""},
            {"seed", 0},
            {"ratios", {0.8, 0.1, 0.1}}};
}

json run_ingest(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    auto loaded = load_triples(cfg.at("triples").get<std::string>());
    const auto ratios_v = cfg.at("ratios").get<std::vector<double>>();
    if (ratios_v.size() != 3) throw Error::config("ratios must have three entries");
    SplitRatios ratios{ratios_v[0], ratios_v[1], ratios_v[2]};
    auto split = split_edges(loaded.kg, ratios, cfg.at("seed").get<uint64_t>());

    write_vocab(out + "/entities.txt", loaded.entities);
    write_vocab(out + "/relations.txt", loaded.relations);
    write_triples_tsv(out + "/train.tsv", split.train, loaded.entities, loaded.relations);
    write_triples_tsv(out + "/valid.tsv", split.valid, loaded.entities, loaded.relations);
    write_triples_tsv(out + "/test.tsv", split.test, loaded.entities, loaded.relations);

    json summary{{"entity_count", loaded.kg.entity_count()},
                 {"relation_count", loaded.kg.relation_count()},
                 {"triples", loaded.kg.triple_count()},
                 {"train_triples", split.train.triple_count()},
                 {"valid_triples", split.valid.triple_count()},
                 {"test_triples", split.test.triple_count()},
                 {"entity_vocab_hash", loaded.entities.content_hash()},
                 {"relation_vocab_hash", loaded.relations.content_hash()}};
    write_json(out + "/meta.json", summary);
    return summary;
}

// ------------------------------------------------------------ gen-queries

json gen_queries_defaults() {
    return {{"data", ""},   {"out", ""},      {"split", "test"}, {"shapes", json::array()},
            {"count", 10},  {"seed", 0},      {"retry_budget", 100}};
}

json run_gen_queries(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    const std::string split = cfg.at("split").get<std::string>();
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());

    // The observed graph holds everything available at the previous stage;
    // train queries see no observed edges so that every answer counts as a
    // training target.
    KnowledgeGraph full, observed;
    if (split == "train") {
        full = data.train;
        observed = KnowledgeGraph(data.train.entity_count(), data.train.relation_count(), {});
    } else if (split == "valid") {
        full = merge_graphs({&data.train, &data.valid});
        observed = data.train;
    } else if (split == "test") {
        full = merge_graphs({&data.train, &data.valid, &data.test});
        observed = merge_graphs({&data.train, &data.valid});
    } else {
        throw Error::config("split must be train, valid or test");
    }

    std::vector<std::string> shapes = cfg.at("shapes").get<std::vector<std::string>>();
    if (shapes.empty()) shapes = split == "train" ? train_shapes() : canonical_shapes();

    SampleConfig sample_cfg;
    sample_cfg.retry_budget = cfg.at("retry_budget").get<int>();
    const int count = cfg.at("count").get<int>();
    const uint64_t seed = cfg.at("seed").get<uint64_t>();

    std::vector<QueryInstance> instances;
    json stats = json::object();
    for (size_t s = 0; s < shapes.size(); ++s) {
        auto batch = sample_instances(full, observed, shapes[s], count,
                                      seed + 1000003 * (s + 1), sample_cfg);
        stats[shapes[s]] = batch.size();
        instances.insert(instances.end(), std::make_move_iterator(batch.begin()),
                         std::make_move_iterator(batch.end()));
    }

    const std::string jsonl = out + "/queries-" + split + ".jsonl";
    write_instances_jsonl(jsonl, instances);
    json summary{{"instances", instances.size()}, {"file", jsonl}, {"per_shape", stats}};
    write_json(out + "/stats-" + split + ".json", summary);
    return summary;
}

// --------------------------------------------------------------- pretrain

json pretrain_defaults() {
    return {{"data", ""},        {"out", ""},         {"seed", 0},     {"rank", 32},
            {"epochs", 200},     {"lr", 1e-2},        {"batch", 128},  {"reg_weight", 1e-3},
            {"weight_decay", 0.0}};
}

json run_pretrain(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());

    PretrainConfig pc;
    pc.rank = cfg.at("rank").get<int64_t>();
    pc.epochs = cfg.at("epochs").get<int>();
    pc.lr = cfg.at("lr").get<double>();
    pc.batch = cfg.at("batch").get<int>();
    pc.reg_weight = cfg.at("reg_weight").get<double>();
    pc.weight_decay = cfg.at("weight_decay").get<double>();
    pc.seed = cfg.at("seed").get<uint64_t>();

    PretrainResult result = pretrain(data.train, pc, &data.valid, &data.train);

    ParamStore store;
    store.add("entity_emb", result.table.entity_emb.detach());
    store.add("relation_emb", result.table.relation_emb.detach());
    json meta{{"kind", "clmpt-predictor"},
              {"rank", pc.rank},
              {"entity_vocab_hash", data.entities.content_hash()},
              {"relation_vocab_hash", data.relations.content_hash()}};
    save_checkpoint(out + "/predictor.ckpt", store, meta);

    json summary{{"checkpoint", out + "/predictor.ckpt"},
                 {"epochs", pc.epochs},
                 {"final_loss", result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()},
                 {"holdout_mrr_1p", result.holdout_mrr ? json(*result.holdout_mrr) : json()}};
    write_json(out + "/pretrain-report.json", summary);
    return summary;
}

// ------------------------------------------------------------------ train

json train_defaults() {
    return {{"data", ""},
            {"queries", ""},
            {"predictor", ""},
            {"out", ""},
            {"seed", 0},
            {"steps", 2000},
            {"batch", 16},
            {"lr", 1e-3},
            {"weight_decay", 1e-4},
            {"pooling", "mean"},
            {"predictor_trainable", true},
            {"conditional_passing", true},
            {"temperature", 0.05},
            {"negatives", 128},
            {"encoder_layers", 2},
            {"encoder_heads", 4},
            {"ffn_hidden", 256},
            {"dropout", 0.0},
            {"log_every", 0}};
}

json run_train(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());
    auto instances = read_instances_jsonl(cfg.at("queries").get<std::string>());

    LoadedCheckpoint predictor = load_checkpoint(cfg.at("predictor").get<std::string>());
    if (predictor.metadata.value("kind", "") != "clmpt-predictor")
        throw Error::config("not a predictor checkpoint: " + cfg.at("predictor").get<std::string>());
    check_vocab_hashes(predictor.metadata, data, "train");

    ComplexEmbeddingTable table;
    table.entity_emb = predictor.store.get("entity_emb").detach();
    table.relation_emb = predictor.store.get("relation_emb").detach();
    table.rank = predictor.metadata.at("rank").get<int64_t>();

    ClmptModel model = build_model(table, model_config_from(cfg, table.rank),
                                   cfg.at("seed").get<uint64_t>());
    model.metadata["entity_vocab_hash"] = data.entities.content_hash();
    model.metadata["relation_vocab_hash"] = data.relations.content_hash();

    TrainConfig tc;
    tc.steps = cfg.at("steps").get<int>();
    tc.batch = cfg.at("batch").get<int>();
    tc.optim.lr = cfg.at("lr").get<double>();
    tc.optim.weight_decay = cfg.at("weight_decay").get<double>();
    tc.seed = cfg.at("seed").get<uint64_t>();
    tc.log_every = cfg.at("log_every").get<int>();

    TrainResult result = train(model, instances, tc);
    save_model(out + "/model.ckpt", model);

    json summary{{"checkpoint", out + "/model.ckpt"},
                 {"steps", tc.steps},
                 {"first_loss", result.step_losses.empty() ? 0.0 : result.step_losses.front()},
                 {"final_loss", result.step_losses.empty() ? 0.0 : result.step_losses.back()},
                 {"messages_encoded", result.messages_encoded}};
    write_json(out + "/train-report.json", summary);
    return summary;
}

// ------------------------------------------------------------------- eval

json eval_defaults() {
    return {{"data", ""},    {"queries", ""}, {"model", ""},
            {"scorer", "model"},  // or "oracle"
            {"out", ""},     {"workers", 1}};
}

json run_eval(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());
    auto instances = read_instances_jsonl(cfg.at("queries").get<std::string>());
    const std::string scorer_kind = cfg.at("scorer").get<std::string>();

    MetricsReport report;
    if (scorer_kind == "oracle") {
        KnowledgeGraph full = merge_graphs({&data.train, &data.valid, &data.test});
        report = evaluate(instances, oracle_scorer(full), cfg.at("workers").get<int>());
    } else if (scorer_kind == "model") {
        ClmptModel model = load_model(cfg.at("model").get<std::string>());
        check_vocab_hashes(model.metadata, data, "eval");
        report = evaluate(instances, model_scorer(model), cfg.at("workers").get<int>());
    } else {
        throw Error::config("scorer must be 'model' or 'oracle'");
    }

    write_json(out + "/report.json", report.to_json());
    write_text(out + "/report.txt", report.to_table());
    return report.to_json();
}

// ----------------------------------------------------------------- answer

json answer_defaults() {
    return {{"data", ""}, {"model", ""}, {"query", ""}, {"out", ""}, {"topk", 10}};
}

json run_answer(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());
    ClmptModel model = load_model(cfg.at("model").get<std::string>());
    check_vocab_hashes(model.metadata, data, "answer");

    EFO1Query query = parse_query(cfg.at("query").get<std::string>(), data.entities, data.relations);
    AnswerResult result = answer(query, model);

    const int64_t topk = std::min<int64_t>(cfg.at("topk").get<int64_t>(),
                                           static_cast<int64_t>(result.order.size()));
    json rows = json::array();
    for (int64_t i = 0; i < topk; ++i) {
        const EntityId e = result.order[static_cast<size_t>(i)];
        rows.push_back({{"rank", i + 1},
                        {"entity", data.entities.name(e)},
                        {"id", e},
                        {"score", result.scores[static_cast<size_t>(e)]}});
    }
    json summary{{"query", cfg.at("query")}, {"top", rows}};
    write_json(out + "/answer.json", summary);
    return summary;
}

// ------------------------------------------------------------------ bench

json bench_defaults() {
    return {{"data", ""},
            {"out", ""},
            {"seed", 0},
            {"rank", 16},
            {"steps", 30},
            {"batch", 8},
            {"repetitions", 3},
            {"count_per_shape", 4},
            {"shapes", {"2i", "3i", "3in", "pi"}},
            {"negatives", 16},
            {"encoder_layers", 2},
            {"encoder_heads", 4},
            {"ffn_hidden", 128}};
}

json run_bench(const json& cfg) {
    const std::string out = prepare_out_dir(cfg);
    DataBundle data = load_data_dir(cfg.at("data").get<std::string>());
    const uint64_t seed = cfg.at("seed").get<uint64_t>();

    BenchWorkload workload;
    workload.table = init_embedding_table(data.train.entity_count(), data.train.relation_count(),
                                          cfg.at("rank").get<int64_t>(), seed);
    KnowledgeGraph empty(data.train.entity_count(), data.train.relation_count(), {});
    const auto shapes = cfg.at("shapes").get<std::vector<std::string>>();
    for (size_t s = 0; s < shapes.size(); ++s) {
        auto batch = sample_instances(data.train, empty, shapes[s],
                                      cfg.at("count_per_shape").get<int>(),
                                      seed + 7919 * (s + 1));
        workload.instances.insert(workload.instances.end(),
                                  std::make_move_iterator(batch.begin()),
                                  std::make_move_iterator(batch.end()));
    }
    workload.model_config.negatives = cfg.at("negatives").get<int>();
    workload.model_config.encoder.width = 2 * cfg.at("rank").get<int64_t>();
    workload.model_config.encoder.layers = cfg.at("encoder_layers").get<int>();
    workload.model_config.encoder.heads = cfg.at("encoder_heads").get<int>();
    workload.model_config.encoder.ffn_hidden = cfg.at("ffn_hidden").get<int64_t>();
    workload.train_config.steps = cfg.at("steps").get<int>();
    workload.train_config.batch = cfg.at("batch").get<int>();
    workload.train_config.seed = seed;
    workload.repetitions = cfg.at("repetitions").get<int>();

    CostComparison result = cost_comparison(workload);
    write_json(out + "/bench-report.json", result.to_json());
    return result.to_json();
}

// --------------------------------------------------------------- selftest

json selftest_defaults() { return {{"out", ""}, {"seed", 0}}; }

bool run_selftest(const json& cfg, std::ostream& os) {
    const std::string out = prepare_out_dir(cfg);
    const uint64_t seed = cfg.at("seed").get<uint64_t>();
    Rng rng(seed ^ 0x5e1f7e57);
    bool all_ok = true;
    std::ostringstream log;
    auto report = [&](const std::string& name, bool ok) {
        log << (ok ? "PASS " : "FAIL ") << name << "\n";
        all_ok = all_ok && ok;
    };

    // Message encoding antisymmetry.
    {
        bool ok = true;
        for (int trial = 0; trial < 200 && ok; ++trial) {
            std::vector<double> ev(16), rv(16);
            for (double& x : ev) x = rng.normal();
            for (double& x : rv) x = rng.normal();
            Tensor e({16}, ev), r({16}, rv);
            for (Direction d : {Direction::TailToHead, Direction::HeadToTail}) {
                auto pos = encode_message(e, r, d, false);
                auto neg = encode_message(e, r, d, true);
                for (size_t i = 0; i < pos.values().size(); ++i)
                    ok = ok && neg.values()[i] == -pos.values()[i];
            }
        }
        report("negation-antisymmetry", ok);
    }

    // Permutation invariance of the node update.
    {
        ParamStore store;
        EncoderConfig ec;
        ec.width = 8;
        ec.heads = 2;
        ec.ffn_hidden = 16;
        Rng init(seed + 1);
        auto enc = TransformerEncoder::create(store, "enc", ec, init);
        bool ok = true;
        for (int trial = 0; trial < 100 && ok; ++trial) {
            std::vector<Tensor> msgs;
            const int k = 1 + static_cast<int>(rng.uniform_below(4));
            for (int i = 0; i < k; ++i) {
                std::vector<double> v(8);
                for (double& x : v) x = rng.normal();
                msgs.emplace_back(std::vector<int64_t>{8}, std::move(v));
            }
            std::vector<double> nv(8);
            for (double& x : nv) x = rng.normal();
            Tensor node({8}, nv);
            auto base = node_update(msgs, node, enc, Pooling::Mean);
            std::vector<Tensor> shuffled = msgs;
            rng.shuffle(shuffled);
            ok = node_update(shuffled, node, enc, Pooling::Mean).values() == base.values();
        }
        report("node-update-permutation-invariance", ok);
    }

    // Filtered rank equals a naive recount.
    {
        bool ok = true;
        for (int trial = 0; trial < 500 && ok; ++trial) {
            const int n = 5 + static_cast<int>(rng.uniform_below(40));
            std::vector<double> scores(static_cast<size_t>(n));
            for (double& s : scores) s = rng.uniform() < 0.25 ? 0.5 : rng.uniform();
            const EntityId target = static_cast<EntityId>(rng.uniform_below(n));
            std::vector<EntityId> others;
            for (int e = 0; e < n; ++e)
                if (e != target && rng.uniform() < 0.2) others.push_back(static_cast<EntityId>(e));
            std::set<EntityId> excl(others.begin(), others.end());
            excl.insert(target);
            int64_t naive = 1;
            for (int e = 0; e < n; ++e) {
                if (excl.count(static_cast<EntityId>(e))) continue;
                if (scores[static_cast<size_t>(e)] > scores[static_cast<size_t>(target)] ||
                    (scores[static_cast<size_t>(e)] == scores[static_cast<size_t>(target)] &&
                     e < target))
                    ++naive;
            }
            ok = filtered_rank(scores, target, others) == naive;
        }
        report("filtered-rank-recount", ok);
    }

    // Symbolic answering equals brute-force enumeration on small graphs.
    {
        bool ok = true;
        for (int trial = 0; trial < 30 && ok; ++trial) {
            std::set<Triple> tr;
            const int n = 8 + static_cast<int>(rng.uniform_below(8));
            while (tr.size() < 40)
                tr.insert({static_cast<EntityId>(rng.uniform_below(n)),
                           static_cast<RelationId>(rng.uniform_below(3)),
                           static_cast<EntityId>(rng.uniform_below(n))});
            KnowledgeGraph kg(n, 3, {tr.begin(), tr.end()});
            const auto& shapes = canonical_shapes();
            const std::string shape = shapes[rng.uniform_below(shapes.size())];
            const auto [nc, nr] = shape_arity(shape);
            ShapeBindings b;
            for (int i = 0; i < nc; ++i)
                b.constants.push_back(static_cast<EntityId>(rng.uniform_below(n)));
            for (int i = 0; i < nr; ++i)
                b.relations.push_back(static_cast<RelationId>(rng.uniform_below(3)));
            auto q = instantiate_shape(shape, b);
            for (const auto& cq : q.disjuncts) {
                // Enumerate assignments of free+existential variables.
                std::vector<int32_t> vars;
                for (const auto& node : cq.nodes)
                    if (node.kind != NodeKind::Constant) vars.push_back(node.node_id);
                std::vector<EntityId> assign(cq.nodes.size(), -1);
                for (const auto& node : cq.nodes)
                    if (node.kind == NodeKind::Constant)
                        assign[static_cast<size_t>(node.node_id)] = node.entity;
                std::set<EntityId> expected;
                std::function<void(size_t)> rec = [&](size_t i) {
                    if (i == vars.size()) {
                        for (const auto& edge : cq.edges) {
                            const bool present =
                                kg.contains({assign[static_cast<size_t>(edge.head_node)],
                                             edge.relation,
                                             assign[static_cast<size_t>(edge.tail_node)]});
                            if (present == edge.negated) return;
                        }
                        expected.insert(assign[static_cast<size_t>(cq.free_node())]);
                        return;
                    }
                    for (EntityId v = 0; v < n; ++v) {
                        assign[static_cast<size_t>(vars[i])] = v;
                        rec(i + 1);
                    }
                    assign[static_cast<size_t>(vars[i])] = -1;
                };
                rec(0);
                const auto got = answer_conjunctive(kg, cq);
                ok = ok && std::vector<EntityId>(expected.begin(), expected.end()) == got;
            }
        }
        report("symbolic-oracle-enumeration", ok);
    }

    os << log.str();
    write_text(out + "/selftest.txt", log.str());
    return all_ok;
}

// ----------------------------------------------------------------- config

json resolve_config(json defaults, const json& file_config, const json& flag_overrides) {
    for (const json* layer : {&file_config, &flag_overrides}) {
        for (const auto& [key, value] : layer->items()) {
            if (!defaults.contains(key)) throw Error::config("unknown config key: " + key);
            defaults[key] = value;
        }
    }
    return defaults;
}

} // namespace clmpt::pipelines
