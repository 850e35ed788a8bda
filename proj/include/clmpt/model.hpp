#pragma once
// Conditional logical message passing with a transformer node-update scheme
// on top of the pretrained link predictor.
//
// Per layer: every edge sends a one-hop logical message to each incident
// variable node (constants receive nothing while conditional passing is
// on); each receiver re-encodes {messages, own state} as an unordered set
// through a shared transformer encoder and pools the outputs. After
// L = free_variable_depth layers, the free node's state is the predicted
// answer embedding, ranked against entities by cosine similarity.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clmpt/encoder.hpp"
#include "clmpt/linkpred.hpp"
#include "clmpt/metrics.hpp"
#include "clmpt/oracle.hpp"
#include "clmpt/query.hpp"

namespace clmpt {

enum class Pooling { Mean, Sum, Max };

Pooling pooling_from_name(const std::string& name);
const char* pooling_name(Pooling p);

struct ModelConfig {
    Pooling pooling = Pooling::Mean;
    bool predictor_trainable = true;
    bool conditional_passing = true;
    double temperature = 0.05;
    int negatives = 128;
    EncoderConfig encoder;  // width filled from the predictor rank

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// One-hop inference on an atom: the closed-form logical message.
//   tail -> head, positive:  conj(r) (x) t
//   head -> tail, positive:  r (x) h
// Negated atoms flip the sign of the corresponding case.
Tensor encode_message(const Tensor& neighbor_emb, const Tensor& rel_emb, Direction direction,
                      bool negated);

// Set-transformer update: encode {messages..., node_emb} and pool. The
// input set is canonically ordered first, so any permutation of the
// messages yields a bitwise-identical result.
Tensor node_update(const std::vector<Tensor>& messages, const Tensor& node_emb,
                   const TransformerEncoder& encoder, Pooling pooling,
                   Rng* dropout_rng = nullptr);

struct ForwardStats {
    int64_t messages_encoded = 0;
    int64_t node_updates = 0;
};

// Closed-form expectation for the per-forward message count.
int64_t expected_message_count(const ConjunctiveQueryGraph& cq, bool conditional_passing);

struct ClmptModel {
    ParamStore store;  // entity_emb, relation_emb, var.x, var.y, encoder.*
    ModelConfig config;
    TransformerEncoder encoder;
    int64_t rank = 0;
    nlohmann::json metadata;  // vocabulary hashes etc.

    ComplexEmbeddingTable table() const;
    Tensor var_x() const { return store.get("var.x"); }
    Tensor var_y() const { return store.get("var.y"); }

    // Parameters the optimizer touches; excludes the predictor when frozen.
    std::vector<std::string> trainable_names() const;
};

ClmptModel build_model(const ComplexEmbeddingTable& table, ModelConfig config, uint64_t seed);

void save_model(const std::string& path, const ClmptModel& model);
ClmptModel load_model(const std::string& path);

// Runs L shared-encoder layers over the query graph and returns the free
// node's final state.
Tensor clmpt_forward(const ConjunctiveQueryGraph& cq, const ClmptModel& model,
                     ForwardStats* stats = nullptr, Rng* dropout_rng = nullptr);

struct ForwardStates {
    Tensor free_state;
    std::vector<Tensor> node_states;  // indexed by node id, final layer
};

ForwardStates clmpt_forward_all(const ConjunctiveQueryGraph& cq, const ClmptModel& model,
                                ForwardStats* stats = nullptr, Rng* dropout_rng = nullptr);

// -log [ F(pos) / (F(pos) + sum_k F(neg_k)) ], F(x) = exp(cos(x, pred)/T).
Tensor nce_loss(const Tensor& pred_emb, const Tensor& positive_emb, const Tensor& negative_embs,
                double temperature);

struct TrainConfig {
    int steps = 2000;
    int batch = 16;
    AdamWConfig optim;
    uint64_t seed = 0;
    int log_every = 0;  // 0 = silent
};

struct TrainResult {
    std::vector<double> step_losses;
    int64_t messages_encoded = 0;
};

// NCE training: one uniform positive answer per query, `negatives` uniform
// noise entities, AdamW on encoder + variable embeddings (+ tables when the
// predictor is trainable). Deterministic per seed.
TrainResult train(ClmptModel& model, const std::vector<QueryInstance>& instances,
                  const TrainConfig& config);

struct AnswerResult {
    std::vector<EntityId> order;   // descending score, ties ascending id
    std::vector<double> scores;    // per entity: max cosine over disjuncts
};

AnswerResult answer(const EFO1Query& query, const ClmptModel& model);

// Scorer adapter for the evaluation harness.
Scorer model_scorer(const ClmptModel& model);

} // namespace clmpt
