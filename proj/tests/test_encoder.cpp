#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "stare/encoder.hpp"
#include "testutil.hpp"

using namespace stare;

namespace {

struct ToyGraph {
    Vocabulary vocab;
    HyperGraph graph;
};

ToyGraph build_toy(std::size_t n_statements, std::size_t n_entities, std::size_t n_relations,
                   double qual_prob, std::size_t max_quals, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto raw = testutil::random_raw_statements(n_statements, n_entities, n_relations, qual_prob,
                                               max_quals, rng);
    Vocabulary v = build_vocabulary(raw);
    auto [aug, av] = augment_edges(encode_statements(raw, v), v);
    return {av, to_sparse(aug, av)};
}

EmbeddingStore random_store(const HyperGraph& g, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EmbeddingStore s;
    s.entities = testutil::random_tensor(g.num_entities + kNumReservedEntityRows, d, rng, 0.5);
    s.relations = testutil::random_tensor(g.num_relations, d, rng, 0.5);
    return s;
}

EncoderConfig toy_config(std::size_t d) {
    EncoderConfig cfg;
    cfg.num_layers = 2;
    cfg.dim = d;
    cfg.phi_r = PhiKind::Rotate;
    cfg.phi_q = PhiKind::Rotate;
    cfg.gamma_kind = GammaKind::WeightedSum;
    cfg.alpha = 0.8;
    cfg.dropout = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("single self-loop with identity weights is a fixed point") {
    RawStatement dummy;  // vocabulary needs at least the entity
    dummy.subject = "a";
    dummy.relation = "r";
    dummy.object = "a";
    Vocabulary v = build_vocabulary({dummy});
    // Only the self-loop fact: drop the base/inverse facts, keep the loop.
    auto [aug, av] = augment_edges({}, v);
    REQUIRE(aug.size() == 1);  // just the self-loop (no base statements)
    HyperGraph g = to_sparse(aug, av);

    EncoderConfig cfg = toy_config(4);
    cfg.num_layers = 1;
    cfg.phi_r = PhiKind::Mult;
    cfg.activation = Activation::Identity;

    EmbeddingStore store = random_store(g, 4, 1);
    for (std::size_t j = 0; j < 4; ++j)
        store.relations.at(static_cast<std::size_t>(av.self_loop_relation()), j) = 1.0;

    ParamMap params;
    Tensor eye(4, 4);
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    params["layer0.w_out"] = eye;
    params["layer0.w_in"] = eye;
    params["layer0.w_self"] = eye;
    params["layer0.w_q"] = eye;
    params["layer0.w_rel"] = eye;

    EmbeddingStore out = layer_forward(g, store, params, 0, cfg);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(out.entities.at(0, j) == doctest::Approx(store.entities.at(0, j)).epsilon(1e-12));
}

TEST_CASE("qualifier-free layer equals the relational reference bit-exact") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ToyGraph toy = build_toy(12, 6, 3, 0.0, 0, seed);
        const std::size_t d = 6;
        EmbeddingStore store = random_store(toy.graph, d, seed + 100);
        std::mt19937_64 rng(seed + 200);
        ParamMap params;
        params["layer0.w_out"] = testutil::random_tensor(d, d, rng, 0.4);
        params["layer0.w_in"] = testutil::random_tensor(d, d, rng, 0.4);
        params["layer0.w_self"] = testutil::random_tensor(d, d, rng, 0.4);
        params["layer0.w_q"] = testutil::random_tensor(d, d, rng, 0.4);
        params["layer0.w_rel"] = testutil::random_tensor(d, d, rng, 0.4);

        for (PhiKind phi_kind : {PhiKind::Mult, PhiKind::Ccorr, PhiKind::Rotate}) {
            EncoderConfig cfg = toy_config(d);
            cfg.phi_r = phi_kind;
            cfg.phi_q = phi_kind;
            EmbeddingStore out = layer_forward(toy.graph, store, params, 0, cfg);
            Tensor ref = testutil::compgcn_reference_nodes(
                toy.graph, store.entities, store.relations, params["layer0.w_out"],
                params["layer0.w_in"], params["layer0.w_self"], phi_kind, cfg.activation);
            REQUIRE(out.entities.size() == ref.size());
            CHECK(std::memcmp(out.entities.data.data(), ref.data.data(),
                              ref.size() * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("layer with qualifiers matches the dense reference") {
    for (GammaKind gk : {GammaKind::WeightedSum, GammaKind::Mul, GammaKind::Concat}) {
        ToyGraph toy = build_toy(10, 5, 3, 0.7, 3, 77);
        const std::size_t d = 4;
        EmbeddingStore store = random_store(toy.graph, d, 7);
        std::mt19937_64 rng(8);
        const std::size_t mr = gk == GammaKind::Concat ? 2 * d : d;
        ParamMap params;
        params["layer0.w_out"] = testutil::random_tensor(mr, d, rng, 0.4);
        params["layer0.w_in"] = testutil::random_tensor(mr, d, rng, 0.4);
        params["layer0.w_self"] = testutil::random_tensor(mr, d, rng, 0.4);
        params["layer0.w_q"] = testutil::random_tensor(d, d, rng, 0.4);
        params["layer0.w_rel"] = testutil::random_tensor(d, d, rng, 0.4);
        EncoderConfig cfg = toy_config(d);
        cfg.gamma_kind = gk;
        EmbeddingStore out = layer_forward(toy.graph, store, params, 0, cfg);
        Tensor ref = testutil::stare_reference_nodes(
            toy.graph, store.entities, store.relations, params["layer0.w_out"],
            params["layer0.w_in"], params["layer0.w_self"], params["layer0.w_q"], cfg);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(out.entities.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-10));
    }
}

TEST_CASE("aggregate_qualifiers") {
    RawStatement s{"a", "r", "b", {{"q", "c"}}};
    Vocabulary v = build_vocabulary({s});
    auto [aug, av] = augment_edges(encode_statements({s}, v), v);
    HyperGraph g = to_sparse(aug, av);
    EmbeddingStore store = random_store(g, 2, 3);
    EncoderConfig cfg = toy_config(2);
    cfg.phi_q = PhiKind::Mult;
    Tensor eye(2, 2);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;

    SUBCASE("single pair with identity projection is the composition") {
        auto qr = static_cast<std::size_t>(av.relation_id("q"));
        auto qv = static_cast<std::size_t>(av.entity_id("c"));
        store.relations.at(qr, 0) = 1;
        store.relations.at(qr, 1) = 2;
        store.entities.at(qv, 0) = 3;
        store.entities.at(qv, 1) = 4;
        auto out = aggregate_qualifiers(0, g, store, eye, cfg);
        REQUIRE(out.size() == 2);
        CHECK(out[0] == doctest::Approx(3.0));
        CHECK(out[1] == doctest::Approx(8.0));
    }
    SUBCASE("fact without qualifiers yields the EMPTY marker") {
        // self-loop facts carry no qualifiers
        auto out = aggregate_qualifiers(g.num_facts - 1, g, store, eye, cfg);
        CHECK(out.empty());
    }
}

TEST_CASE("qualifier aggregation is invariant to qualifier row order") {
    std::mt19937_64 seed_rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        ToyGraph toy = build_toy(8, 6, 4, 1.0, 6, seed_rng());
        const std::size_t d = 6;
        EmbeddingStore store = random_store(toy.graph, d, seed_rng());
        std::mt19937_64 rng(seed_rng());
        Tensor w_q = testutil::random_tensor(d, d, rng, 0.5);
        EncoderConfig cfg = toy_config(d);

        // Shuffle the qualifier matrix rows and recompute.
        HyperGraph shuffled = toy.graph;
        std::vector<std::size_t> perm(shuffled.qual_rel.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        auto apply = [&perm](auto& column) {
            auto copy = column;
            for (std::size_t i = 0; i < perm.size(); ++i) column[i] = copy[perm[i]];
        };
        apply(shuffled.qual_rel);
        apply(shuffled.qual_val);
        apply(shuffled.qual_fact);

        for (std::size_t k = 0; k < toy.graph.num_facts; ++k) {
            auto a = aggregate_qualifiers(k, toy.graph, store, w_q, cfg);
            auto b = aggregate_qualifiers(k, shuffled, store, w_q, cfg);
            REQUIRE(a.size() == b.size());
            for (std::size_t j = 0; j < a.size(); ++j)
                CHECK(std::abs(a[j] - b[j]) <= 1e-6 * std::max(1.0, std::abs(a[j])));
        }
        // Same row order twice is bit-identical.
        for (std::size_t k = 0; k < toy.graph.num_facts; ++k) {
            auto a = aggregate_qualifiers(k, toy.graph, store, w_q, cfg);
            auto b = aggregate_qualifiers(k, toy.graph, store, w_q, cfg);
            CHECK(a == b);
        }
    }
}

TEST_CASE("message composes the worked pieces") {
    EncoderConfig cfg = toy_config(2);
    cfg.phi_r = PhiKind::Mult;
    Tensor eye(2, 2);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    SUBCASE("weighted sum with the worked numbers") {
        auto out = message({1, 1}, {1, 1}, {0, 2}, EdgeDirection::Outgoing, eye, eye, eye, cfg);
        CHECK(out[0] == doctest::Approx(0.8));
        CHECK(out[1] == doctest::Approx(1.2));
    }
    SUBCASE("EMPTY marker reduces to the qualifier-free message") {
        auto with_empty =
            message({2, 3}, {4, 5}, {}, EdgeDirection::Incoming, eye, eye, eye, cfg);
        CHECK(with_empty == std::vector<double>{8, 15});
    }
}

TEST_CASE("message equals an independent dense computation on random input") {
    std::mt19937_64 rng(41);
    const std::size_t d = 4;
    for (int trial = 0; trial < 20; ++trial) {
        EncoderConfig cfg = toy_config(d);
        cfg.phi_r = std::array<PhiKind, 3>{PhiKind::Mult, PhiKind::Ccorr,
                                           PhiKind::Rotate}[trial % 3];
        auto h_u = testutil::random_vector(d, rng);
        auto h_r = testutil::random_vector(d, rng);
        auto h_q = testutil::random_vector(d, rng);
        Tensor w_out = testutil::random_tensor(d, d, rng);
        Tensor w_in = testutil::random_tensor(d, d, rng);
        Tensor w_self = testutil::random_tensor(d, d, rng);

        auto got = message(h_u, h_r, h_q, EdgeDirection::Outgoing, w_out, w_in, w_self, cfg);

        // Independent route: gamma, composition and the matrix product done
        // with their own oracles.
        std::vector<double> rel_in(d);
        for (std::size_t j = 0; j < d; ++j)
            rel_in[j] = cfg.alpha * h_r[j] + (1.0 - cfg.alpha) * h_q[j];
        auto composed = testutil::reference_phi(h_u, rel_in, cfg.phi_r);
        std::vector<double> expected(d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < d; ++k) expected[j] += composed[k] * w_out.at(k, j);

        REQUIRE(got.size() == expected.size());
        for (std::size_t j = 0; j < d; ++j)
            CHECK(got[j] == doctest::Approx(expected[j]).epsilon(1e-12));
    }
}

TEST_CASE("encoder_forward with one layer equals layer_forward") {
    ToyGraph toy = build_toy(10, 5, 3, 0.5, 2, 5);
    const std::size_t d = 4;
    EncoderConfig cfg = toy_config(d);
    cfg.num_layers = 1;
    std::mt19937_64 rng(3);
    ParamMap params = init_encoder_params(toy.graph, cfg, rng);

    EmbeddingStore store{params.at("v"), params.at("r")};
    EmbeddingStore direct = layer_forward(toy.graph, store, params, 0, cfg);

    Tape tape;
    std::mt19937_64 drop_rng(0);
    auto out = encoder_forward(tape, toy.graph, params, cfg, false, drop_rng);
    CHECK(tape.val(out.entities) == direct.entities);
    CHECK(tape.val(out.relations) == direct.relations);
}

TEST_CASE("encoder eval mode is bit-identical across runs") {
    ToyGraph toy = build_toy(15, 7, 3, 0.5, 3, 6);
    EncoderConfig cfg = toy_config(4);
    std::mt19937_64 rng(4);
    ParamMap params = init_encoder_params(toy.graph, cfg, rng);
    auto run = [&]() {
        Tape tape;
        std::mt19937_64 drop_rng(9);
        auto out = encoder_forward(tape, toy.graph, params, cfg, false, drop_rng);
        return std::make_pair(tape.val(out.entities), tape.val(out.relations));
    };
    auto [v1, r1] = run();
    auto [v2, r2] = run();
    CHECK(v1 == v2);
    CHECK(r1 == r2);
}

TEST_CASE("one layer only changes embeddings within one hop") {
    ToyGraph toy = build_toy(12, 8, 3, 0.3, 2, 8);
    const std::size_t d = 4;
    EncoderConfig cfg = toy_config(d);
    std::mt19937_64 rng(5);
    ParamMap params = init_encoder_params(toy.graph, cfg, rng);
    EmbeddingStore store{params.at("v"), params.at("r")};

    EntityId poked = 2;
    EmbeddingStore perturbed = store;
    perturbed.entities.at(static_cast<std::size_t>(poked), 0) += 0.25;

    EmbeddingStore base_out = layer_forward(toy.graph, store, params, 0, cfg);
    EmbeddingStore poke_out = layer_forward(toy.graph, perturbed, params, 0, cfg);

    // Nodes reachable from the poked entity in one hop: targets of edges whose
    // subject is the poked node, or whose qualifier value is the poked node.
    std::vector<bool> reachable(store.entities.rows, false);
    for (std::size_t e = 0; e < toy.graph.num_facts; ++e) {
        if (toy.graph.sub[e] == poked)
            reachable[static_cast<std::size_t>(toy.graph.obj[e])] = true;
    }
    for (std::size_t q = 0; q < toy.graph.qual_val.size(); ++q)
        if (toy.graph.qual_val[q] == poked) {
            auto e = static_cast<std::size_t>(toy.graph.qual_fact[q]);
            reachable[static_cast<std::size_t>(toy.graph.obj[e])] = true;
        }

    for (std::size_t v = 0; v < store.entities.rows; ++v) {
        bool changed = false;
        for (std::size_t j = 0; j < d; ++j)
            if (base_out.entities.at(v, j) != poke_out.entities.at(v, j)) changed = true;
        if (!reachable[v]) CHECK_FALSE(changed);
    }
}

TEST_CASE("finite differences through two encoder layers") {
    ToyGraph toy = build_toy(8, 5, 2, 0.6, 2, 12);
    const std::size_t d = 4;
    EncoderConfig cfg = toy_config(d);
    std::mt19937_64 rng(6);
    ParamMap params = init_encoder_params(toy.graph, cfg, rng);

    Tensor weights;
    auto forward = [&](std::map<std::string, Tensor>* grads) {
        Tape tape;
        std::mt19937_64 drop_rng(0);
        std::map<std::string, Var> bound;
        auto out = encoder_forward(tape, toy.graph, params, cfg, true, drop_rng, &bound);
        if (weights.empty()) {
            std::mt19937_64 wrng(77);
            weights = testutil::random_tensor(tape.val(out.entities).rows,
                                              tape.val(out.entities).cols, wrng);
        }
        Var w = tape.leaf(weights, false);
        Var loss = tape.sum_all(tape.mul(out.entities, w));
        if (grads) {
            tape.backward(loss);
            for (auto& [name, var] : bound) (*grads)[name] = tape.grad_of(var);
        }
        return tape.val(loss).data[0];
    };

    std::map<std::string, Tensor> analytic;
    forward(&analytic);
    auto loss_only = [&]() { return forward(nullptr); };
    for (auto& [name, tensor] : params) {
        double err = testutil::fd_max_rel_err(loss_only, tensor.data.data(), tensor.size(),
                                              analytic.at(name).data.data());
        INFO(name);
        CHECK(err <= 1e-4);
    }
}
