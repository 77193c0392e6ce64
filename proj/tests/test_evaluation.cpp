#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "stare/evaluation.hpp"
#include "stare/training.hpp"
#include "testutil.hpp"

using namespace stare;

namespace {

std::vector<std::uint8_t> all_candidates(std::size_t n) {
    return std::vector<std::uint8_t>(n, 1);
}

}  // namespace

TEST_CASE("filtered rank worked examples") {
    SUBCASE("clear winner") {
        CHECK(filtered_rank({0.9, 0.5, 0.1}, 0, {}, all_candidates(3)) == 1.0);
    }
    SUBCASE("one competitor filtered away") {
        CHECK(filtered_rank({0.9, 0.5, 0.1}, 2, {1}, all_candidates(3)) == 2.0);
    }
    SUBCASE("all-equal scores average the tie") {
        for (EntityId gold : {0, 1, 2})
            CHECK(filtered_rank({0.4, 0.4, 0.4}, gold, {}, all_candidates(3)) == 2.0);
    }
    SUBCASE("gold inside the filter set still ranks") {
        CHECK(filtered_rank({0.9, 0.5, 0.1}, 0, {0, 1}, all_candidates(3)) == 1.0);
    }
    SUBCASE("masked gold is an error") {
        std::vector<std::uint8_t> mask{1, 0, 1};
        CHECK_THROWS_AS(filtered_rank({0.9, 0.5, 0.1}, 1, {}, mask), Error);
    }
}

TEST_CASE("rank properties") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 3 + rng() % 20;
        std::vector<double> scores(n);
        for (double& s : scores) s = std::floor(unit(rng) * 8) / 8.0;  // force ties
        auto gold = static_cast<EntityId>(rng() % n);
        std::vector<EntityId> filter;
        for (std::size_t j = 0; j < n; ++j)
            if (unit(rng) < 0.2 && static_cast<EntityId>(j) != gold)
                filter.push_back(static_cast<EntityId>(j));
        auto mask = all_candidates(n);

        double base = filtered_rank(scores, gold, filter, mask);

        SUBCASE("") {}
        // Filtering monotonicity: growing the filter set never increases rank.
        std::vector<EntityId> bigger = filter;
        for (std::size_t j = 0; j < n; ++j) {
            auto id = static_cast<EntityId>(j);
            if (id != gold && unit(rng) < 0.3 &&
                std::find(bigger.begin(), bigger.end(), id) == bigger.end())
                bigger.push_back(id);
        }
        std::sort(bigger.begin(), bigger.end());
        CHECK(filtered_rank(scores, gold, bigger, mask) <= base);

        // Score-shift invariance.
        std::vector<double> shifted = scores;
        for (double& s : shifted) s += 3.25;
        CHECK(filtered_rank(shifted, gold, filter, mask) == base);

        // Oracle equivalence, exact.
        CHECK(testutil::rank_oracle(scores, gold, filter, mask) == base);
    }
}

TEST_CASE("metrics arithmetic") {
    SUBCASE("worked example") {
        Metrics m = compute_metrics({1.0, 2.0, 10.0});
        CHECK(m.mrr == doctest::Approx((1.0 + 0.5 + 0.1) / 3.0).epsilon(1e-12));
        CHECK(m.h1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(m.h5 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(m.h10 == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("perfect ranks") {
        Metrics m = compute_metrics({1.0, 1.0, 1.0});
        CHECK(m.mrr == 1.0);
        CHECK(m.h1 == 1.0);
        CHECK(m.h10 == 1.0);
    }
    SUBCASE("random ranks equal a spreadsheet-style recomputation") {
        std::mt19937_64 rng(8);
        std::vector<double> ranks;
        for (int i = 0; i < 50; ++i) ranks.push_back(1.0 + rng() % 40);
        Metrics m = compute_metrics(ranks);
        double mrr = 0, h1 = 0, h5 = 0, h10 = 0;
        for (double r : ranks) {
            mrr += 1.0 / r;
            h1 += r <= 1 ? 1 : 0;
            h5 += r <= 5 ? 1 : 0;
            h10 += r <= 10 ? 1 : 0;
        }
        auto n = static_cast<double>(ranks.size());
        CHECK(m.mrr == doctest::Approx(mrr / n).epsilon(1e-12));
        CHECK(m.h1 == doctest::Approx(h1 / n).epsilon(1e-12));
        CHECK(m.h5 == doctest::Approx(h5 / n).epsilon(1e-12));
        CHECK(m.h10 == doctest::Approx(h10 / n).epsilon(1e-12));
        CHECK(m.h1 <= m.h5);
        CHECK(m.h5 <= m.h10);
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(compute_metrics({}), Error);
    }
}

namespace {

struct EvalFixture {
    std::vector<RawStatement> raw;
    Vocabulary vocab;
    std::vector<Statement> stmts;
    LinkPredictionModel model;

    EvalFixture()
        : raw{{"a", "r1", "b", {{"q1", "c"}}},
              {"b", "r1", "c", {}},
              {"c", "r2", "d", {}},
              {"d", "r2", "a", {{"q1", "b"}}},
              {"a", "r2", "d", {}}},
          vocab(build_vocabulary(raw)),
          stmts(encode_statements(raw, vocab)),
          model(stmts, vocab, make_config()) {}

    static ModelConfig make_config() {
        ModelConfig cfg;
        cfg.use_encoder = false;
        cfg.encoder.dim = 8;
        cfg.decoder.max_len = 7;
        cfg.decoder.hidden = 16;
        cfg.decoder.dropout = 0.0;
        return cfg;
    }
};

}  // namespace

TEST_CASE("oracle scorer reaches MRR 1 in both directions") {
    EvalFixture fx;
    FilterIndex filter = build_filter_index({&fx.stmts}, fx.model.vocab);
    BatchScorer oracle = [&](const std::vector<Query>& batch) {
        Tensor scores(batch.size(), fx.model.score_columns());
        for (std::size_t i = 0; i < batch.size(); ++i)
            scores.at(i, static_cast<std::size_t>(batch[i].target)) = 1.0;
        return scores;
    };
    RankReport report = evaluate_queries(oracle, fx.model, fx.stmts, filter);
    CHECK(report.object_dir.mrr == 1.0);
    CHECK(report.subject_dir.mrr == 1.0);
    CHECK(report.average.mrr == 1.0);
}

TEST_CASE("uniform scorer hits the closed-form tie value") {
    EvalFixture fx;
    // Empty filter sets: register only the evaluated queries themselves.
    FilterIndex filter = build_filter_index({&fx.stmts}, fx.model.vocab);
    BatchScorer uniform = [&](const std::vector<Query>& batch) {
        return Tensor(batch.size(), fx.model.score_columns(), 0.5);
    };
    // With all scores equal, every query's competitors tie. rank =
    // (1 + m) / 2 where m is the number of unfiltered candidates.
    RankReport report = evaluate_queries(uniform, fx.model, fx.stmts, filter);
    for (std::size_t i = 0; i < fx.stmts.size(); ++i) {
        const Statement& s = fx.stmts[i];
        const auto* fset = filter.find(s);
        REQUIRE(fset != nullptr);
        double m = static_cast<double>(fx.model.num_entities() - fset->size() + 1);
        CHECK(report.object_ranks[i] == doctest::Approx((1.0 + m) / 2.0));
    }
    // Single-query closed form on n fresh entities: rank (n+1)/2, MRR 2/(n+1).
    const std::size_t n = 7;
    std::vector<double> flat(n, 0.25);
    double rank = filtered_rank(flat, 3, {}, all_candidates(n));
    CHECK(rank == doctest::Approx((n + 1.0) / 2.0));
    CHECK(1.0 / rank == doctest::Approx(2.0 / (n + 1.0)));
}

TEST_CASE("production evaluator matches the brute-force oracle end to end") {
    EvalFixture fx;
    FilterIndex filter = build_filter_index({&fx.stmts}, fx.model.vocab);
    RankReport prod = evaluate_model(fx.model, fx.stmts, filter, 3);

    // Independent pass: score with the model, rank with the test oracle.
    std::vector<double> obj_ranks, sub_ranks;
    auto mask = fx.model.candidate_mask();
    for (const auto& s : fx.stmts) {
        auto [oq, sq] = fx.model.eval_queries(s);
        for (bool subject : {false, true}) {
            const Query& q = subject ? sq : oq;
            Tensor scores = fx.model.score({q});
            std::vector<double> row(scores.row(0), scores.row(0) + scores.cols);
            const auto* fset = filter.find(q.source);
            REQUIRE(fset != nullptr);
            double r = testutil::rank_oracle(row, q.target, *fset, mask);
            (subject ? sub_ranks : obj_ranks).push_back(r);
        }
    }
    CHECK(prod.object_ranks == obj_ranks);
    CHECK(prod.subject_ranks == sub_ranks);
}

TEST_CASE("missing filter key is an integrity error") {
    EvalFixture fx;
    FilterIndex empty;
    CHECK_THROWS_AS(evaluate_model(fx.model, fx.stmts, empty), Error);
}

TEST_CASE("filter index covers every evaluated query's gold entity") {
    EvalFixture fx;
    FilterIndex filter = build_filter_index({&fx.stmts}, fx.model.vocab);
    for (const auto& s : fx.stmts) {
        auto [oq, sq] = fx.model.eval_queries(s);
        const auto* fo = filter.find(oq.source);
        REQUIRE(fo != nullptr);
        CHECK(std::binary_search(fo->begin(), fo->end(), oq.target));
        const auto* fs = filter.find(sq.source);
        REQUIRE(fs != nullptr);
        CHECK(std::binary_search(fs->begin(), fs->end(), sq.target));
    }
}

TEST_CASE("report serialization") {
    EvalFixture fx;
    FilterIndex filter = build_filter_index({&fx.stmts}, fx.model.vocab);
    RankReport report = evaluate_model(fx.model, fx.stmts, filter);
    std::string table = metrics_table(report);
    CHECK(table.find("MRR") != std::string::npos);
    std::string records = metrics_records(report);
    CHECK(records.find("mrr object ") != std::string::npos);
    CHECK(records.find("h10 average ") != std::string::npos);
}
