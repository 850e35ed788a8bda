#include "clmpt/linkpred.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clmpt/error.hpp"
#include "clmpt/metrics.hpp"
#include "clmpt/optim.hpp"
#include "clmpt/rng.hpp"

namespace clmpt {

ComplexEmbeddingTable init_embedding_table(int64_t entity_count, int64_t relation_count,
                                           int64_t rank, uint64_t seed) {
    if (rank <= 0) throw Error::config("embedding rank must be positive");
    Rng rng(seed);
    const double bound = 0.5 / std::sqrt(static_cast<double>(rank));
    auto init = [&](int64_t rows) {
        std::vector<double> v(static_cast<size_t>(rows * 2 * rank));
        for (double& x : v) x = rng.uniform(-bound, bound);
        return Tensor({rows, 2 * rank}, std::move(v));
    };
    ComplexEmbeddingTable table;
    table.entity_emb = init(entity_count);
    table.relation_emb = init(relation_count);
    table.rank = rank;
    return table;
}

Tensor score(const Tensor& h, const Tensor& r, const Tensor& t) {
    if (h.shape() != r.shape() || h.shape() != t.shape())
        throw Error::shape("score: embedding widths differ");
    // Re(u * conj(t)) per coordinate is a plain real dot product of the
    // interleaved vectors, so the score reduces to sum(u .* t).
    Tensor u = complex_hadamard(h, r);
    return sum_all(mul(u, t));
}

Tensor truth_value(const Tensor& h, const Tensor& r, const Tensor& t, bool negated) {
    Tensor psi = sigmoid(score(h, r, t));
    if (!negated) return psi;
    return sub(Tensor::scalar(1.0), psi);
}

Tensor n3_penalty(const Tensor& rows) { return cube_norm_penalty(rows); }

namespace {

// Candidate logits for one prediction direction: queries (B, 2d) against
// the rows of the table restricted to `candidates` (empty = all rows).
Tensor candidate_logits(const Tensor& queries, const Tensor& table,
                        const std::vector<int64_t>& candidates) {
    if (candidates.empty()) return matmul(queries, transpose(table));
    return matmul(queries, transpose(gather_rows(table, candidates)));
}

} // namespace

PretrainResult pretrain(const KnowledgeGraph& train_kg, const PretrainConfig& config,
                        const KnowledgeGraph* holdout_kg, const KnowledgeGraph* filter_kg) {
    if (train_kg.triple_count() == 0) throw Error::config("pretrain: empty train graph");
    if (config.epochs < 0 || config.batch <= 0) throw Error::config("pretrain: bad schedule");

    // Zero-epoch pretraining returns exactly init_embedding_table(seed).
    ComplexEmbeddingTable init = init_embedding_table(
        train_kg.entity_count(), train_kg.relation_count(), config.rank, config.seed);
    Rng rng = Rng(config.seed).fork(1);

    ParamStore store;
    store.add("entity_emb", init.entity_emb.detach());
    store.add("relation_emb", init.relation_emb.detach());
    AdamWConfig optim;
    optim.lr = config.lr;
    optim.weight_decay = config.weight_decay;

    const int64_t n_entities = train_kg.entity_count();
    const bool full_softmax = n_entities <= config.full_softmax_limit;
    std::vector<Triple> triples = train_kg.triples();

    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(triples);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t begin = 0; begin < triples.size(); begin += static_cast<size_t>(config.batch)) {
            const size_t end = std::min(triples.size(), begin + static_cast<size_t>(config.batch));
            std::vector<int64_t> heads, rels, tails;
            for (size_t i = begin; i < end; ++i) {
                heads.push_back(triples[i].head);
                rels.push_back(triples[i].relation);
                tails.push_back(triples[i].tail);
            }

            Tensor& entity_emb = store.get("entity_emb");
            Tensor& relation_emb = store.get("relation_emb");
            Tensor h = gather_rows(entity_emb, heads);
            Tensor r = gather_rows(relation_emb, rels);
            Tensor t = gather_rows(entity_emb, tails);

            // Candidate set and labels. Full softmax ranks against every
            // entity; the sampled variant puts the batch's own targets first
            // and pads with uniform noise entities.
            std::vector<int64_t> candidates;
            std::vector<int64_t> tail_labels, head_labels;
            if (full_softmax) {
                tail_labels = tails;
                head_labels = heads;
            } else {
                candidates = tails;
                candidates.insert(candidates.end(), heads.begin(), heads.end());
                for (int i = 0; i < config.sampled_candidates; ++i)
                    candidates.push_back(static_cast<int64_t>(rng.uniform_below(n_entities)));
                for (size_t i = 0; i < tails.size(); ++i) {
                    tail_labels.push_back(static_cast<int64_t>(i));
                    head_labels.push_back(static_cast<int64_t>(tails.size() + i));
                }
            }

            Tensor tail_queries = complex_hadamard(h, r);
            Tensor head_queries = complex_hadamard(conjugate(r), t);
            Tensor loss = add(cross_entropy_mean(candidate_logits(tail_queries, entity_emb, candidates),
                                                 tail_labels),
                              cross_entropy_mean(candidate_logits(head_queries, entity_emb, candidates),
                                                 head_labels));
            if (config.reg_weight > 0.0)
                loss = add(loss, scalar_mul(n3_penalty(concat_rows({h, r, t})), config.reg_weight));

            const double loss_value = loss.scalar_value();
            if (!std::isfinite(loss_value))
                throw Error::training("pretrain: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += loss_value;
            ++batches;

            backward(loss);
            adamw_step(store, optim);
            store.zero_grads();
        }
        epoch_losses.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }

    PretrainResult result;
    result.table.entity_emb = store.get("entity_emb").detach();
    result.table.relation_emb = store.get("relation_emb").detach();
    result.table.rank = config.rank;
    result.epoch_losses = std::move(epoch_losses);
    if (holdout_kg && holdout_kg->triple_count() > 0) {
        const KnowledgeGraph* filter = filter_kg ? filter_kg : &train_kg;
        result.holdout_mrr = link_prediction_mrr(result.table, *holdout_kg, *filter);
    }
    return result;
}

double link_prediction_mrr(const ComplexEmbeddingTable& table, const KnowledgeGraph& eval_kg,
                           const KnowledgeGraph& filter_kg) {
    NoGradGuard no_grad;
    double rr_sum = 0.0;
    int64_t n = 0;
    for (const Triple& triple : eval_kg.triples()) {
        Tensor u = complex_hadamard(table.entity_row(triple.head),
                                    table.relation_row(triple.relation));
        Tensor logits = matmul(reshape(u, {1, table.width()}), transpose(table.entity_emb));
        const std::vector<double>& scores = logits.values();

        std::vector<EntityId> filtered;
        for (EntityId t : filter_kg.neighbors(triple.head, triple.relation, Direction::HeadToTail))
            if (t != triple.tail) filtered.push_back(t);
        for (EntityId t : eval_kg.neighbors(triple.head, triple.relation, Direction::HeadToTail))
            if (t != triple.tail) filtered.push_back(t);
        std::sort(filtered.begin(), filtered.end());
        filtered.erase(std::unique(filtered.begin(), filtered.end()), filtered.end());

        rr_sum += 1.0 / static_cast<double>(filtered_rank(scores, triple.tail, filtered));
        ++n;
    }
    return n ? rr_sum / static_cast<double>(n) : 0.0;
}

Ranking rank_answers(const Tensor& query_emb, const ComplexEmbeddingTable& table) {
    NoGradGuard no_grad;
    if (query_emb.numel() != table.width())
        throw Error::shape("rank_answers: query width does not match the table");
    double norm = 0.0;
    for (double x : query_emb.values()) norm += x * x;
    if (norm == 0.0) throw Error::validation("rank_answers: zero-norm query embedding");

    Tensor sims = cosine_similarity_rows(table.entity_emb, query_emb);
    Ranking out;
    out.scores = sims.values();
    out.order.resize(out.scores.size());
    std::iota(out.order.begin(), out.order.end(), 0);
    std::stable_sort(out.order.begin(), out.order.end(), [&](EntityId a, EntityId b) {
        if (out.scores[static_cast<size_t>(a)] != out.scores[static_cast<size_t>(b)])
            return out.scores[static_cast<size_t>(a)] > out.scores[static_cast<size_t>(b)];
        return a < b;
    });
    return out;
}

} // namespace clmpt
