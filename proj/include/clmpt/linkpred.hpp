#pragma once
// ComplEx-N3 neural link predictor: complex bilinear scoring with a sigmoid
// truth value, nuclear 3-norm regularization, cross-entropy pretraining on
// one-hop triples, and cosine ranking against the entity table.

#include <cstdint>
#include <optional>
#include <vector>

#include "clmpt/kg.hpp"
#include "clmpt/tensor_ops.hpp"

namespace clmpt {

struct ComplexEmbeddingTable {
    Tensor entity_emb;    // (entity_count, 2*rank) interleaved re/im
    Tensor relation_emb;  // (relation_count, 2*rank)
    int64_t rank = 0;

    int64_t width() const { return 2 * rank; }
    Tensor entity_row(EntityId id) const { return row(entity_emb, id); }
    Tensor relation_row(RelationId id) const { return row(relation_emb, id); }
};

// i.i.d. uniform in [-0.5/sqrt(rank), 0.5/sqrt(rank)], seeded.
ComplexEmbeddingTable init_embedding_table(int64_t entity_count, int64_t relation_count,
                                           int64_t rank, uint64_t seed);

// Re(<h x r, conj(t)>) = sum_j Re(h_j r_j conj(t_j)). Differentiable.
Tensor score(const Tensor& h, const Tensor& r, const Tensor& t);

// sigmoid(score); a negated atom reads 1 - truth_value.
Tensor truth_value(const Tensor& h, const Tensor& r, const Tensor& t, bool negated = false);

// Mean over rows of sum_j |z_j|^3.
Tensor n3_penalty(const Tensor& rows);

struct PretrainConfig {
    int64_t rank = 32;
    int epochs = 200;
    double lr = 1e-2;
    int batch = 128;
    double reg_weight = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    // Above this entity count the softmax is taken over a sampled candidate
    // set instead of the full table.
    int64_t full_softmax_limit = 50000;
    int sampled_candidates = 1024;
};

struct PretrainResult {
    ComplexEmbeddingTable table;
    std::vector<double> epoch_losses;
    // Filtered tail-prediction MRR on the holdout edges; unset when no
    // holdout graph was supplied.
    std::optional<double> holdout_mrr;
};

// Cross-entropy over tail prediction for each (h,r,.) and head prediction
// for each (.,r,t), plus reg_weight * n3_penalty on the rows the batch
// touches. Deterministic per seed.
PretrainResult pretrain(const KnowledgeGraph& train_kg, const PretrainConfig& config,
                        const KnowledgeGraph* holdout_kg = nullptr,
                        const KnowledgeGraph* filter_kg = nullptr);

// Filtered one-hop MRR of tail prediction over eval edges; known tails from
// filter_kg (plus the other eval tails) are removed before ranking.
double link_prediction_mrr(const ComplexEmbeddingTable& table, const KnowledgeGraph& eval_kg,
                           const KnowledgeGraph& filter_kg);

struct Ranking {
    std::vector<EntityId> order;      // descending score, ties by ascending id
    std::vector<double> scores;       // indexed by entity id
};

// Entities sorted by cosine similarity between query_emb and each entity
// row. Zero-norm query embeddings are rejected.
Ranking rank_answers(const Tensor& query_emb, const ComplexEmbeddingTable& table);

} // namespace clmpt
