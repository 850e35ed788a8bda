#include "clmpt/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "clmpt/checkpoint.hpp"
#include "clmpt/error.hpp"

namespace clmpt {

Pooling pooling_from_name(const std::string& name) {
    if (name == "mean") return Pooling::Mean;
    if (name == "sum") return Pooling::Sum;
    if (name == "max") return Pooling::Max;
    throw Error::config("unknown pooling: " + name);
}

const char* pooling_name(Pooling p) {
    switch (p) {
        case Pooling::Mean: return "mean";
        case Pooling::Sum: return "sum";
        case Pooling::Max: return "max";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (temperature <= 0.0) throw Error::config("temperature must be positive");
    if (negatives < 1) throw Error::config("negative sample count must be >= 1");
    encoder.validate();
}

nlohmann::json ModelConfig::to_json() const {
    return {{"pooling", pooling_name(pooling)},
            {"predictor_trainable", predictor_trainable},
            {"conditional_passing", conditional_passing},
            {"temperature", temperature},
            {"negatives", negatives},
            {"encoder",
             {{"width", encoder.width},
              {"layers", encoder.layers},
              {"heads", encoder.heads},
              {"ffn_hidden", encoder.ffn_hidden},
              {"dropout", encoder.dropout}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.pooling = pooling_from_name(j.value("pooling", "mean"));
    c.predictor_trainable = j.value("predictor_trainable", true);
    c.conditional_passing = j.value("conditional_passing", true);
    c.temperature = j.value("temperature", 0.05);
    c.negatives = j.value("negatives", 128);
    if (j.contains("encoder")) {
        const auto& je = j.at("encoder");
        c.encoder.width = je.value("width", c.encoder.width);
        c.encoder.layers = je.value("layers", c.encoder.layers);
        c.encoder.heads = je.value("heads", c.encoder.heads);
        c.encoder.ffn_hidden = je.value("ffn_hidden", c.encoder.ffn_hidden);
        c.encoder.dropout = je.value("dropout", c.encoder.dropout);
    }
    return c;
}

Tensor encode_message(const Tensor& neighbor_emb, const Tensor& rel_emb, Direction direction,
                      bool negated) {
    if (neighbor_emb.shape() != rel_emb.shape())
        throw Error::shape("encode_message: embedding widths differ");
    Tensor message = direction == Direction::TailToHead
                         ? complex_hadamard(conjugate(rel_emb), neighbor_emb)
                         : complex_hadamard(rel_emb, neighbor_emb);
    return negated ? scalar_mul(message, -1.0) : message;
}

Tensor node_update(const std::vector<Tensor>& messages, const Tensor& node_emb,
                   const TransformerEncoder& encoder, Pooling pooling, Rng* dropout_rng) {
    if (messages.empty())
        throw Error::contract("node_update: a variable node must receive at least one message");

    // Canonical set order: the encoder input is a set, so sorting the rows
    // by value makes the whole update bitwise permutation-invariant.
    std::vector<const Tensor*> rows;
    rows.reserve(messages.size() + 1);
    for (const Tensor& m : messages) rows.push_back(&m);
    rows.push_back(&node_emb);
    std::stable_sort(rows.begin(), rows.end(), [](const Tensor* a, const Tensor* b) {
        return std::lexicographical_compare(a->values().begin(), a->values().end(),
                                            b->values().begin(), b->values().end());
    });
    std::vector<Tensor> ordered;
    ordered.reserve(rows.size());
    for (const Tensor* r : rows) ordered.push_back(*r);

    Tensor encoded = encoder.run(stack_rows(ordered), dropout_rng);
    switch (pooling) {
        case Pooling::Mean: return mean(encoded, 0);
        case Pooling::Sum: return sum(encoded, 0);
        case Pooling::Max: return max(encoded, 0);
    }
    throw Error::contract("unreachable pooling");
}

int64_t expected_message_count(const ConjunctiveQueryGraph& cq, bool conditional_passing) {
    const int64_t layers = free_variable_depth(cq);
    int64_t per_layer = 0;
    for (const AtomEdge& e : cq.edges) {
        if (conditional_passing) {
            per_layer += cq.nodes[static_cast<size_t>(e.head_node)].kind != NodeKind::Constant;
            per_layer += cq.nodes[static_cast<size_t>(e.tail_node)].kind != NodeKind::Constant;
        } else {
            per_layer += 2;
        }
    }
    return layers * per_layer;
}

ComplexEmbeddingTable ClmptModel::table() const {
    ComplexEmbeddingTable t;
    t.entity_emb = store.get("entity_emb");
    t.relation_emb = store.get("relation_emb");
    t.rank = rank;
    return t;
}

std::vector<std::string> ClmptModel::trainable_names() const {
    std::vector<std::string> names = encoder.parameter_names();
    names.push_back("var.x");
    names.push_back("var.y");
    if (config.predictor_trainable) {
        names.push_back("entity_emb");
        names.push_back("relation_emb");
    }
    return names;
}

ClmptModel build_model(const ComplexEmbeddingTable& table, ModelConfig config, uint64_t seed) {
    if (table.rank <= 0) throw Error::config("build_model: embedding table has no rank");
    config.encoder.width = table.width();
    config.validate();

    ClmptModel model;
    model.config = config;
    model.rank = table.rank;

    Rng rng(seed);
    model.store.add("entity_emb", table.entity_emb.detach());
    model.store.add("relation_emb", table.relation_emb.detach());
    const double bound = 0.5 / std::sqrt(static_cast<double>(table.rank));
    auto var_init = [&]() {
        std::vector<double> v(static_cast<size_t>(table.width()));
        for (double& x : v) x = rng.uniform(-bound, bound);
        return Tensor({table.width()}, std::move(v));
    };
    model.store.add("var.x", var_init());
    model.store.add("var.y", var_init());
    model.encoder = TransformerEncoder::create(model.store, "encoder", config.encoder, rng);

    model.store.get("entity_emb").set_requires_grad(config.predictor_trainable);
    model.store.get("relation_emb").set_requires_grad(config.predictor_trainable);
    return model;
}

void save_model(const std::string& path, const ClmptModel& model) {
    nlohmann::json meta = model.metadata;
    meta["kind"] = "clmpt-model";
    meta["rank"] = model.rank;
    meta["model_config"] = model.config.to_json();
    save_checkpoint(path, model.store, meta);
}

ClmptModel load_model(const std::string& path) {
    LoadedCheckpoint loaded = load_checkpoint(path);
    if (loaded.metadata.value("kind", "") != "clmpt-model")
        throw Error::parse("not a model checkpoint: " + path);

    ClmptModel model;
    model.metadata = loaded.metadata;
    model.metadata.erase("kind");
    model.metadata.erase("rank");
    model.metadata.erase("model_config");
    model.rank = loaded.metadata.at("rank").get<int64_t>();
    model.config = ModelConfig::from_json(loaded.metadata.at("model_config"));
    model.store = std::move(loaded.store);
    model.encoder = TransformerEncoder::bind(model.store, "encoder", model.config.encoder);
    model.store.get("entity_emb").set_requires_grad(model.config.predictor_trainable);
    model.store.get("relation_emb").set_requires_grad(model.config.predictor_trainable);
    return model;
}

Tensor clmpt_forward(const ConjunctiveQueryGraph& cq, const ClmptModel& model,
                     ForwardStats* stats, Rng* dropout_rng) {
    return clmpt_forward_all(cq, model, stats, dropout_rng).free_state;
}

ForwardStates clmpt_forward_all(const ConjunctiveQueryGraph& cq, const ClmptModel& model,
                                ForwardStats* stats, Rng* dropout_rng) {
    const Tensor& entity_emb = model.store.get("entity_emb");
    const Tensor& relation_emb = model.store.get("relation_emb");
    cq.validate(entity_emb.dim(0), relation_emb.dim(0));

    const int64_t layers = free_variable_depth(cq);
    const size_t n_nodes = cq.nodes.size();

    std::vector<Tensor> states(n_nodes);
    for (const TermNode& node : cq.nodes) {
        if (node.kind == NodeKind::Constant)
            states[static_cast<size_t>(node.node_id)] = row(entity_emb, node.entity);
        else if (node.kind == NodeKind::Existential)
            states[static_cast<size_t>(node.node_id)] = model.var_x();
        else
            states[static_cast<size_t>(node.node_id)] = model.var_y();
    }

    std::vector<Tensor> rel_rows(cq.edges.size());
    for (size_t e = 0; e < cq.edges.size(); ++e)
        rel_rows[e] = row(relation_emb, cq.edges[e].relation);

    for (int64_t layer = 0; layer < layers; ++layer) {
        std::vector<Tensor> next = states;
        for (const TermNode& node : cq.nodes) {
            if (model.config.conditional_passing && node.kind == NodeKind::Constant) continue;
            const int32_t v = node.node_id;
            std::vector<Tensor> messages;
            for (size_t e = 0; e < cq.edges.size(); ++e) {
                const AtomEdge& edge = cq.edges[e];
                if (edge.tail_node == v) {
                    messages.push_back(encode_message(states[static_cast<size_t>(edge.head_node)],
                                                      rel_rows[e], Direction::HeadToTail,
                                                      edge.negated));
                } else if (edge.head_node == v) {
                    messages.push_back(encode_message(states[static_cast<size_t>(edge.tail_node)],
                                                      rel_rows[e], Direction::TailToHead,
                                                      edge.negated));
                }
            }
            if (stats) {
                stats->messages_encoded += static_cast<int64_t>(messages.size());
                stats->node_updates += 1;
            }
            next[static_cast<size_t>(v)] =
                node_update(messages, states[static_cast<size_t>(v)], model.encoder,
                            model.config.pooling, dropout_rng);
        }
        states = std::move(next);
    }
    ForwardStates out;
    out.free_state = states[static_cast<size_t>(cq.free_node())];
    out.node_states = std::move(states);
    return out;
}

namespace {

double vector_norm(const Tensor& t) {
    double acc = 0.0;
    for (double x : t.values()) acc += x * x;
    return std::sqrt(acc);
}

} // namespace

Tensor nce_loss(const Tensor& pred_emb, const Tensor& positive_emb, const Tensor& negative_embs,
                double temperature) {
    if (temperature <= 0.0) throw Error::config("nce_loss: temperature must be positive");
    if (negative_embs.rank() != 2 || negative_embs.dim(0) < 1)
        throw Error::shape("nce_loss: negatives must be a (K, width) matrix with K >= 1");
    if (vector_norm(pred_emb) == 0.0 || vector_norm(positive_emb) == 0.0)
        throw Error::training("nce_loss: zero-norm embedding");
    const auto& nv = negative_embs.values();
    const int64_t width = negative_embs.dim(1);
    for (int64_t r = 0; r < negative_embs.dim(0); ++r) {
        double acc = 0.0;
        for (int64_t j = 0; j < width; ++j) acc += nv[static_cast<size_t>(r * width + j)] *
                                                   nv[static_cast<size_t>(r * width + j)];
        if (acc == 0.0) throw Error::training("nce_loss: zero-norm negative embedding");
    }

    Tensor pos_sim = cosine_similarity(pred_emb, positive_emb);          // (1)
    Tensor neg_sims = cosine_similarity_rows(negative_embs, pred_emb);   // (K)
    Tensor logits = scalar_mul(concat_vecs({pos_sim, neg_sims}), 1.0 / temperature);
    return neg_log_softmax_first(logits);
}

TrainResult train(ClmptModel& model, const std::vector<QueryInstance>& instances,
                  const TrainConfig& config) {
    if (instances.empty()) throw Error::config("train: no instances");
    if (config.steps < 0 || config.batch <= 0) throw Error::config("train: bad schedule");
    model.store.get("entity_emb").set_requires_grad(model.config.predictor_trainable);
    model.store.get("relation_emb").set_requires_grad(model.config.predictor_trainable);

    // Positives come from the answers known at training time.
    std::vector<std::vector<EntityId>> positives(instances.size());
    for (size_t i = 0; i < instances.size(); ++i) {
        positives[i] = instances[i].easy_answers;
        positives[i].insert(positives[i].end(), instances[i].hard_answers.begin(),
                            instances[i].hard_answers.end());
        if (positives[i].empty())
            throw Error::validation("train: instance " + std::to_string(i) + " (" +
                                    instances[i].shape + ") has no answers");
    }

    const std::vector<std::string> trainable = model.trainable_names();
    const int64_t n_entities = model.store.get("entity_emb").dim(0);
    const int64_t n_negatives =
        std::min<int64_t>(model.config.negatives, std::max<int64_t>(1, n_entities - 1));

    Rng rng(config.seed);
    Rng* dropout_rng = model.config.encoder.dropout > 0.0 ? &rng : nullptr;

    TrainResult result;
    ForwardStats stats;
    for (int step = 0; step < config.steps; ++step) {
        Tensor batch_loss;
        for (int b = 0; b < config.batch; ++b) {
            const size_t idx = static_cast<size_t>(rng.uniform_below(instances.size()));
            const QueryInstance& inst = instances[idx];

            const EntityId pos =
                positives[idx][rng.uniform_below(positives[idx].size())];
            std::vector<int64_t> neg_ids(static_cast<size_t>(n_negatives));
            for (auto& id : neg_ids) id = static_cast<int64_t>(rng.uniform_below(n_entities));

            Tensor pos_emb = row(model.store.get("entity_emb"), pos);
            Tensor neg_embs = gather_rows(model.store.get("entity_emb"), neg_ids);

            Tensor inst_loss;
            for (const auto& cq : inst.query.disjuncts) {
                Tensor pred = clmpt_forward(cq, model, &stats, dropout_rng);
                Tensor l = nce_loss(pred, pos_emb, neg_embs, model.config.temperature);
                inst_loss = inst_loss.defined() ? add(inst_loss, l) : l;
            }
            if (inst.query.disjuncts.size() > 1)
                inst_loss = scalar_mul(inst_loss,
                                       1.0 / static_cast<double>(inst.query.disjuncts.size()));
            if (!std::isfinite(inst_loss.scalar_value()))
                throw Error::training("train: non-finite loss on shape " + inst.shape);

            batch_loss = batch_loss.defined() ? add(batch_loss, inst_loss) : inst_loss;
        }
        batch_loss = scalar_mul(batch_loss, 1.0 / static_cast<double>(config.batch));
        result.step_losses.push_back(batch_loss.scalar_value());

        backward(batch_loss);
        adamw_step(model.store, config.optim, trainable);
        model.store.zero_grads();

        if (config.log_every > 0 && (step + 1) % config.log_every == 0)
            std::cerr << "step " << (step + 1) << "/" << config.steps
                      << " loss " << result.step_losses.back() << "\n";
    }
    result.messages_encoded = stats.messages_encoded;
    return result;
}

AnswerResult answer(const EFO1Query& query, const ClmptModel& model) {
    NoGradGuard no_grad;
    query.validate();

    const Tensor& entity_emb = model.store.get("entity_emb");
    const int64_t n_entities = entity_emb.dim(0);
    AnswerResult result;
    result.scores.assign(static_cast<size_t>(n_entities),
                         -std::numeric_limits<double>::infinity());

    for (const auto& cq : query.disjuncts) {
        Tensor pred = clmpt_forward(cq, model);
        if (vector_norm(pred) == 0.0)
            throw Error::validation("answer: zero-norm predicted embedding");
        Tensor sims = cosine_similarity_rows(entity_emb, pred);
        const auto& sv = sims.values();
        for (size_t e = 0; e < sv.size(); ++e)
            result.scores[e] = std::max(result.scores[e], sv[e]);
    }

    result.order.resize(static_cast<size_t>(n_entities));
    std::iota(result.order.begin(), result.order.end(), 0);
    std::stable_sort(result.order.begin(), result.order.end(), [&](EntityId a, EntityId b) {
        if (result.scores[static_cast<size_t>(a)] != result.scores[static_cast<size_t>(b)])
            return result.scores[static_cast<size_t>(a)] > result.scores[static_cast<size_t>(b)];
        return a < b;
    });
    return result;
}

Scorer model_scorer(const ClmptModel& model) {
    return [&model](const QueryInstance& inst) { return answer(inst.query, model).scores; };
}

} // namespace clmpt
