#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clmpt/error.hpp"
#include "clmpt/model.hpp"
#include "clmpt/rng.hpp"
#include "helpers.hpp"

using namespace clmpt;
using clmpt::testing::cvec;
using clmpt::testing::cycle_graph;
using clmpt::testing::random_vec;
using clmpt::testing::unit_vec;

namespace {

ClmptModel tiny_model(int64_t entities, int64_t relations, int64_t rank, uint64_t seed,
                      ModelConfig cfg = {}) {
    auto table = init_embedding_table(entities, relations, rank, seed);
    cfg.encoder.width = 2 * rank;
    cfg.encoder.ffn_hidden = 4 * rank;
    cfg.encoder.heads = 2;
    cfg.negatives = std::min<int>(cfg.negatives, static_cast<int>(entities - 1));
    return build_model(table, cfg, seed + 1);
}

} // namespace

TEST_CASE("encode_message closed forms at d=1") {
    // conj(i) * i = 1
    auto m = encode_message(cvec({0, 1}), cvec({0, 1}), Direction::TailToHead, false);
    CHECK(m.values()[0] == doctest::Approx(1.0));
    CHECK(m.values()[1] == doctest::Approx(0.0));

    auto mn = encode_message(cvec({0, 1}), cvec({0, 1}), Direction::TailToHead, true);
    CHECK(mn.values()[0] == doctest::Approx(-1.0));
    CHECK(mn.values()[1] == doctest::Approx(0.0));

    // Identity-like relation keeps the head unchanged.
    auto mh = encode_message(cvec({0.3, -0.8}), cvec({1, 0}), Direction::HeadToTail, false);
    CHECK(mh.values()[0] == doctest::Approx(0.3));
    CHECK(mh.values()[1] == doctest::Approx(-0.8));
}

TEST_CASE("negation antisymmetry is bitwise in both directions") {
    Rng rng(71);
    for (int trial = 0; trial < 1000; ++trial) {
        auto emb = random_vec(rng, 16);
        auto rel = random_vec(rng, 16);
        for (Direction dir : {Direction::TailToHead, Direction::HeadToTail}) {
            auto pos = encode_message(emb, rel, dir, false);
            auto neg = encode_message(emb, rel, dir, true);
            for (size_t i = 0; i < pos.values().size(); ++i)
                CHECK(neg.values()[i] == -pos.values()[i]);
        }
    }
}

TEST_CASE("closed-form message maximizes the one-hop score over the unit sphere") {
    Rng rng(73);
    const int64_t width = 16;  // d = 8
    for (int pair = 0; pair < 20; ++pair) {
        auto r = unit_vec(rng, width);
        auto t = unit_vec(rng, width);
        Tensor m = encode_message(t, r, Direction::TailToHead, false);
        double norm = 0.0;
        for (double x : m.values()) norm += x * x;
        norm = std::sqrt(norm);
        std::vector<double> mhat(m.values());
        for (double& x : mhat) x /= norm;
        const double best = score(cvec(mhat), r, t).scalar_value();
        for (int cand = 0; cand < 200; ++cand)
            CHECK(best >= score(unit_vec(rng, width), r, t).scalar_value());
    }
}

TEST_CASE("node_update is bitwise permutation invariant") {
    Rng rng(79);
    ParamStore store;
    EncoderConfig ecfg;
    ecfg.width = 8;
    ecfg.heads = 2;
    ecfg.ffn_hidden = 16;
    Rng init_rng(5);
    auto encoder = TransformerEncoder::create(store, "enc", ecfg, init_rng);

    for (Pooling pooling : {Pooling::Mean, Pooling::Sum, Pooling::Max}) {
        for (int trial = 0; trial < 50; ++trial) {
            const int k = 1 + static_cast<int>(rng.uniform_below(4));
            std::vector<Tensor> messages;
            for (int i = 0; i < k; ++i) messages.push_back(random_vec(rng, 8));
            Tensor emb = random_vec(rng, 8);

            auto base = node_update(messages, emb, encoder, pooling);
            std::vector<Tensor> shuffled = messages;
            rng.shuffle(shuffled);
            auto permuted = node_update(shuffled, emb, encoder, pooling);
            CHECK(base.values() == permuted.values());
        }
    }
}

TEST_CASE("node_update with zeroed projections reduces to the residual mean") {
    ParamStore store;
    EncoderConfig ecfg;
    ecfg.width = 6;
    ecfg.heads = 1;
    ecfg.ffn_hidden = 12;
    ecfg.layers = 2;
    Rng init_rng(6);
    auto encoder = TransformerEncoder::create(store, "enc", ecfg, init_rng);
    for (int l = 0; l < ecfg.layers; ++l) {
        const std::string base = "enc.block" + std::to_string(l) + ".";
        std::fill(store.get(base + "wo").raw_values().begin(),
                  store.get(base + "wo").raw_values().end(), 0.0);
        std::fill(store.get(base + "ffn_w2").raw_values().begin(),
                  store.get(base + "ffn_w2").raw_values().end(), 0.0);
    }

    Rng rng(81);
    Tensor message = random_vec(rng, 6);
    Tensor emb = random_vec(rng, 6);
    auto out = node_update({message}, emb, encoder, Pooling::Mean);
    for (int64_t j = 0; j < 6; ++j)
        CHECK(out.values()[static_cast<size_t>(j)] ==
              doctest::Approx((message.values()[static_cast<size_t>(j)] +
                               emb.values()[static_cast<size_t>(j)]) / 2.0)
                  .epsilon(1e-12));
}

TEST_CASE("node_update duplicate-set behavior separates mean from sum pooling") {
    ParamStore store;
    EncoderConfig ecfg;
    ecfg.width = 8;
    ecfg.heads = 2;
    ecfg.ffn_hidden = 16;
    Rng init_rng(7);
    auto encoder = TransformerEncoder::create(store, "enc", ecfg, init_rng);

    Rng rng(83);
    Tensor m1 = random_vec(rng, 8);
    Tensor m2 = random_vec(rng, 8);
    Tensor emb = random_vec(rng, 8);

    // Duplicating the whole set (node_emb included) leaves mean pooling
    // unchanged and doubles sum pooling.
    auto mean_base = node_update({m1, m2}, emb, encoder, Pooling::Mean);
    auto mean_dup = node_update({m1, m2, m1, m2, emb}, emb, encoder, Pooling::Mean);
    for (size_t j = 0; j < 8; ++j)
        CHECK(mean_dup.values()[j] == doctest::Approx(mean_base.values()[j]).epsilon(1e-9));

    auto sum_base = node_update({m1, m2}, emb, encoder, Pooling::Sum);
    auto sum_dup = node_update({m1, m2, m1, m2, emb}, emb, encoder, Pooling::Sum);
    for (size_t j = 0; j < 8; ++j)
        CHECK(sum_dup.values()[j] == doctest::Approx(2.0 * sum_base.values()[j]).epsilon(1e-9));

    // Duplicating only the messages (not the node) shifts the mean output.
    auto mean_lopsided = node_update({m1, m2, m1, m2}, emb, encoder, Pooling::Mean);
    double diff = 0.0;
    for (size_t j = 0; j < 8; ++j) diff += std::abs(mean_lopsided.values()[j] - mean_base.values()[j]);
    CHECK(diff > 1e-8);

    CHECK_THROWS_AS(node_update({}, emb, encoder, Pooling::Mean), Error);
}

TEST_CASE("forward on 1p equals a manual single message update") {
    auto model = tiny_model(6, 2, 4, 17);
    auto q = instantiate_shape("1p", {{3}, {1}});
    ForwardStats stats;
    Tensor out = clmpt_forward(q.disjuncts[0], model, &stats);

    // The receiver y sits at the tail of r1(a, y), so the constant's
    // message is the head-to-tail inference.
    Tensor message = encode_message(row(model.store.get("entity_emb"), 3),
                                    row(model.store.get("relation_emb"), 1),
                                    Direction::HeadToTail, false);
    Tensor manual = node_update({message}, model.var_y(), model.encoder, model.config.pooling);
    CHECK(out.values() == manual.values());
    CHECK(stats.messages_encoded == 1);
    CHECK(stats.node_updates == 1);
}

TEST_CASE("conditional passing leaves constants untouched and counts messages") {
    for (const auto& shape : canonical_shapes()) {
        const auto [nc, nr] = shape_arity(shape);
        auto model = tiny_model(10, 4, 4, 23);
        ShapeBindings b;
        for (int i = 0; i < nc; ++i) b.constants.push_back(static_cast<EntityId>(i + 2));
        for (int i = 0; i < nr; ++i) b.relations.push_back(static_cast<RelationId>(i));
        auto q = instantiate_shape(shape, b);

        for (const auto& cq : q.disjuncts) {
            ForwardStats stats;
            auto states = clmpt_forward_all(cq, model, &stats);
            CHECK(stats.messages_encoded == expected_message_count(cq, true));
            for (const auto& node : cq.nodes) {
                if (node.kind != NodeKind::Constant) continue;
                const auto& state = states.node_states[static_cast<size_t>(node.node_id)];
                const Tensor expect = row(model.store.get("entity_emb"), node.entity);
                CHECK(state.values() == expect.values());
            }

            // Unconditional mode updates constants too and sends more
            // messages whenever a constant borders a variable.
            ClmptModel loose = tiny_model(10, 4, 4, 23);
            loose.config.conditional_passing = false;
            ForwardStats loose_stats;
            auto loose_states = clmpt_forward_all(cq, loose, &loose_stats);
            CHECK(loose_stats.messages_encoded == expected_message_count(cq, false));
            CHECK(loose_stats.messages_encoded > stats.messages_encoded);
        }
    }
}

TEST_CASE("forward is invariant to edge listing order") {
    auto model = tiny_model(8, 3, 4, 29);
    auto q = instantiate_shape("2i", {{1, 2}, {0, 1}});
    auto& cq = q.disjuncts[0];
    Tensor a = clmpt_forward(cq, model);
    std::reverse(cq.edges.begin(), cq.edges.end());
    Tensor b = clmpt_forward(cq, model);
    CHECK(a.values() == b.values());
}

TEST_CASE("encoder parameters are shared across layers") {
    auto model = tiny_model(8, 3, 4, 31);
    // 2p runs two message-passing layers through the same encoder; gradients
    // from both layers accumulate into one parameter set.
    auto q = instantiate_shape("2p", {{1}, {0, 1}});
    Tensor out = clmpt_forward(q.disjuncts[0], model);
    backward(sum_all(out));
    const Tensor g = model.store.get("encoder.block0.wq").grad();
    double norm = 0.0;
    for (double x : g.values()) norm += std::abs(x);
    CHECK(norm > 0.0);
    CHECK(model.encoder.parameter_names().size() ==
          static_cast<size_t>(12 * model.config.encoder.layers));
    model.store.zero_grads();
}

TEST_CASE("nce_loss exact values") {
    // Symmetric case: equal similarities force probability 1/(K+1).
    for (int k : {1, 4, 127}) {
        Tensor pred = cvec({1.0, 0.0});
        Tensor pos = cvec({2.0, 0.0});  // cos = 1, same as every negative
        std::vector<double> negs;
        for (int i = 0; i < k; ++i) {
            negs.push_back(3.0);
            negs.push_back(0.0);
        }
        Tensor neg = Tensor({k, 2}, std::move(negs));
        const double loss = nce_loss(pred, pos, neg, 0.05).scalar_value();
        CHECK(std::abs(loss - std::log(static_cast<double>(k) + 1.0)) < 1e-9);
    }

    // cos(pos)=1, cos(neg)=-1, T=0.05: loss = log(1 + e^-40).
    Tensor pred = cvec({1.0, 0.0});
    const double extreme =
        nce_loss(pred, cvec({1.0, 0.0}), Tensor({1, 2}, {-1.0, 0.0}), 0.05).scalar_value();
    CHECK(extreme == doctest::Approx(std::log1p(std::exp(-40.0))).epsilon(1e-12));
    CHECK(extreme > 0.0);

    CHECK_THROWS_AS(nce_loss(cvec({0.0, 0.0}), pred, Tensor({1, 2}, {1.0, 0.0}), 0.05), Error);
}

TEST_CASE("nce_loss decreases as the positive similarity rises") {
    Rng rng(37);
    Tensor neg = Tensor({3, 4}, {0.3, -1.0, 0.2, 0.8, -0.5, 0.1, 0.9, -0.2, 1.0, 0.4, -0.7, 0.6});
    Tensor pred = cvec({1.0, 0.0, 0.0, 0.0});
    double prev = 1e100;
    // Sweep the positive from anti-aligned to aligned with pred.
    for (double theta : {3.0, 2.0, 1.0, 0.5, 0.1}) {
        Tensor pos = cvec({std::cos(theta), std::sin(theta), 0.0, 0.0});
        const double loss = nce_loss(pred, pos, neg, 0.5).scalar_value();
        CHECK(loss < prev);
        prev = loss;
    }
}

TEST_CASE("end-to-end gradient through nce_loss and forward on 2i") {
    auto model = tiny_model(8, 3, 3, 41);
    auto q = instantiate_shape("2i", {{1, 4}, {0, 2}});
    const double err = clmpt::testing::model_grad_check(
        model, q.disjuncts[0], 2, {5, 6},
        {"var.y", "encoder.block0.wq", "encoder.block0.ffn_w1", "entity_emb", "relation_emb"});
    CHECK(err < 1e-3);
}

TEST_CASE("training reduces the loss and freezes tables on demand") {
    auto kg = cycle_graph(12, {1, 5});
    KnowledgeGraph empty(kg.entity_count(), kg.relation_count(), {});
    std::vector<QueryInstance> instances;
    for (const std::string shape : {"1p", "2i", "2p"}) {
        auto batch = sample_instances(kg, empty, shape, 6, 13);
        instances.insert(instances.end(), batch.begin(), batch.end());
    }

    ModelConfig mcfg;
    mcfg.negatives = 8;
    mcfg.predictor_trainable = false;
    auto table = init_embedding_table(12, 2, 4, 51);
    mcfg.encoder.width = 8;
    mcfg.encoder.ffn_hidden = 16;
    mcfg.encoder.heads = 2;
    auto model = build_model(table, mcfg, 52);

    const auto entity_before = model.store.get("entity_emb").values();
    const auto relation_before = model.store.get("relation_emb").values();

    TrainConfig tcfg;
    tcfg.steps = 50;
    tcfg.batch = 4;
    tcfg.optim.lr = 3e-3;
    tcfg.seed = 53;
    auto result = train(model, instances, tcfg);

    REQUIRE(result.step_losses.size() == 50);
    CHECK(result.step_losses.back() < result.step_losses.front());
    // Frozen predictor: tables bitwise unchanged.
    CHECK(model.store.get("entity_emb").values() == entity_before);
    CHECK(model.store.get("relation_emb").values() == relation_before);

    // Trainable predictor: tables move.
    ModelConfig mcfg2 = mcfg;
    mcfg2.predictor_trainable = true;
    auto model2 = build_model(table, mcfg2, 52);
    auto r2 = train(model2, instances, tcfg);
    CHECK(model2.store.get("entity_emb").values() != entity_before);
}

TEST_CASE("training is deterministic per seed") {
    auto kg = cycle_graph(10, {1, 3});
    KnowledgeGraph empty(kg.entity_count(), kg.relation_count(), {});
    auto instances = sample_instances(kg, empty, "2i", 5, 19);

    auto run = [&]() {
        ModelConfig mcfg;
        mcfg.negatives = 6;
        mcfg.encoder.width = 8;
        mcfg.encoder.ffn_hidden = 16;
        mcfg.encoder.heads = 2;
        auto model = build_model(init_embedding_table(10, 2, 4, 61), mcfg, 62);
        TrainConfig tcfg;
        tcfg.steps = 10;
        tcfg.batch = 3;
        tcfg.seed = 63;
        train(model, instances, tcfg);
        return model;
    };
    auto a = run();
    auto b = run();
    for (const auto& name : a.store.names())
        CHECK(a.store.get(name).values() == b.store.get(name).values());
}

TEST_CASE("answer merges disjuncts by max cosine") {
    auto model = tiny_model(9, 3, 4, 67);

    // Single disjunct ordering equals rank_answers on its embedding.
    auto q1 = instantiate_shape("1p", {{2}, {1}});
    auto direct = answer(q1, model);
    Tensor z = clmpt_forward(q1.disjuncts[0], model);
    auto ranked = rank_answers(z, model.table());
    CHECK(direct.order == ranked.order);

    // A duplicated disjunct changes nothing.
    EFO1Query doubled = q1;
    doubled.disjuncts.push_back(q1.disjuncts[0]);
    auto doubled_ans = answer(doubled, model);
    CHECK(doubled_ans.scores == direct.scores);

    // 2u: per-entity score is the max of the independent disjunct scores.
    auto q2u = instantiate_shape("2u", {{2, 5}, {1, 0}});
    auto merged = answer(q2u, model);
    auto s1 = answer(EFO1Query{{q2u.disjuncts[0]}}, model);
    auto s2 = answer(EFO1Query{{q2u.disjuncts[1]}}, model);
    for (size_t e = 0; e < merged.scores.size(); ++e)
        CHECK(merged.scores[e] ==
              doctest::Approx(std::max(s1.scores[e], s2.scores[e])).epsilon(1e-12));
}

TEST_CASE("model save/load round-trips bitwise") {
    auto model = tiny_model(7, 2, 3, 71);
    model.metadata["entity_vocab_hash"] = 12345;
    const std::string path = "clmpt_test_model.json";
    save_model(path, model);
    auto loaded = load_model(path);
    std::remove(path.c_str());

    CHECK(loaded.rank == model.rank);
    CHECK(loaded.config.negatives == model.config.negatives);
    CHECK(loaded.metadata.at("entity_vocab_hash") == 12345);
    for (const auto& name : model.store.names())
        CHECK(loaded.store.get(name).values() == model.store.get(name).values());

    // Loaded model answers identically.
    auto q = instantiate_shape("2p", {{1}, {0, 1}});
    CHECK(answer(q, loaded).scores == answer(q, model).scores);
}
