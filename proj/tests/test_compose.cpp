#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stare/compose.hpp"
#include "testutil.hpp"

using namespace stare;

TEST_CASE("mult composition") {
    CHECK(phi({1, 2}, {3, 4}, PhiKind::Mult) == std::vector<double>{3, 8});
}

TEST_CASE("rotate composition is a complex product") {
    // (1 + 0i) * (0 + 1i) = 0 + 1i in half/half packing
    CHECK(phi({1, 0}, {0, 1}, PhiKind::Rotate) == std::vector<double>{0, 1});
}

TEST_CASE("ccorr matches the definitional oracle on the worked example") {
    auto expected = testutil::ccorr_oracle({1, 0}, {2, 3});
    CHECK(expected == std::vector<double>{2, 3});
    CHECK(phi({1, 0}, {2, 3}, PhiKind::Ccorr) == expected);
}

TEST_CASE("ccorr and rotate match their oracles across dimensions") {
    std::mt19937_64 rng(7);
    for (std::size_t d : {2u, 4u, 8u, 16u}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto e = testutil::random_vector(d, rng);
            auto r = testutil::random_vector(d, rng);
            auto cc = phi(e, r, PhiKind::Ccorr);
            auto cc_ref = testutil::ccorr_oracle(e, r);
            auto ro = phi(e, r, PhiKind::Rotate);
            auto ro_ref = testutil::rotate_oracle(e, r);
            for (std::size_t i = 0; i < d; ++i) {
                CHECK(std::abs(cc[i] - cc_ref[i]) <=
                      1e-9 * std::max({std::abs(cc[i]), std::abs(cc_ref[i]), 1.0}));
                CHECK(std::abs(ro[i] - ro_ref[i]) <=
                      1e-9 * std::max({std::abs(ro[i]), std::abs(ro_ref[i]), 1.0}));
            }
        }
    }
}

TEST_CASE("rotate preserves per-pair norms for unit-modulus relations") {
    std::mt19937_64 rng(11);
    const std::size_t d = 8, m = d / 2;
    auto e = testutil::random_vector(d, rng);
    auto r = testutil::random_vector(d, rng);
    for (std::size_t j = 0; j < m; ++j) {
        double norm = std::hypot(r[j], r[m + j]);
        r[j] /= norm;
        r[m + j] /= norm;
    }
    auto out = phi(e, r, PhiKind::Rotate);
    for (std::size_t j = 0; j < m; ++j) {
        double before = std::hypot(e[j], e[m + j]);
        double after = std::hypot(out[j], out[m + j]);
        CHECK(std::abs(before - after) < 1e-12 * std::max(1.0, before));
    }
}

TEST_CASE("phi rejects bad shapes") {
    CHECK_THROWS_AS(phi({1, 2}, {1}, PhiKind::Mult), ShapeError);
    CHECK_THROWS_AS(phi({1, 2, 3}, {1, 2, 3}, PhiKind::Rotate), ShapeError);
}

TEST_CASE("gamma weighted sum") {
    SUBCASE("alpha 1 returns the relation unchanged") {
        auto out = gamma({1.5, -2.0}, {9, 9}, GammaKind::WeightedSum, 1.0);
        CHECK(out == std::vector<double>{1.5, -2.0});
    }
    SUBCASE("worked example at alpha 0.8") {
        auto out = gamma({1, 1}, {0, 2}, GammaKind::WeightedSum, 0.8);
        CHECK(out[0] == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(1.2).epsilon(1e-12));
    }
    SUBCASE("stays inside the per-coordinate envelope") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            auto hr = testutil::random_vector(6, rng);
            auto hq = testutil::random_vector(6, rng);
            std::uniform_real_distribution<double> adist(0.0, 1.0);
            double alpha = adist(rng);
            auto out = gamma(hr, hq, GammaKind::WeightedSum, alpha);
            for (std::size_t i = 0; i < out.size(); ++i) {
                CHECK(out[i] >= std::min(hr[i], hq[i]) - 1e-12);
                CHECK(out[i] <= std::max(hr[i], hq[i]) + 1e-12);
            }
        }
    }
    SUBCASE("alpha outside [0,1] is rejected") {
        CHECK_THROWS_AS(gamma({1}, {2}, GammaKind::WeightedSum, 1.5), ShapeError);
        CHECK_THROWS_AS(gamma({1}, {2}, GammaKind::WeightedSum, -0.1), ShapeError);
    }
}

TEST_CASE("gamma mul with all-ones qualifier is the identity") {
    CHECK(gamma({3, -4, 5}, {1, 1, 1}, GammaKind::Mul, 0.8) == std::vector<double>{3, -4, 5});
}

TEST_CASE("gamma concat doubles the width") {
    auto out = gamma({1, 2}, {3, 4}, GammaKind::Concat, 0.8);
    CHECK(out == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("mult backward is the product rule") {
    std::vector<double> ge, gr;
    phi_backward({1, 2}, {3, 4}, PhiKind::Mult, {1, 1}, ge, gr);
    CHECK(ge == std::vector<double>{3, 4});
    CHECK(gr == std::vector<double>{1, 2});
}

TEST_CASE("phi backward matches central finite differences") {
    std::mt19937_64 rng(21);
    for (PhiKind kind : {PhiKind::Mult, PhiKind::Ccorr, PhiKind::Rotate}) {
        const std::size_t d = 4;
        auto e = testutil::random_vector(d, rng);
        auto r = testutil::random_vector(d, rng);
        auto upstream = testutil::random_vector(d, rng);
        std::vector<double> ge, gr;
        phi_backward(e, r, kind, upstream, ge, gr);
        auto loss = [&]() {
            auto out = phi(e, r, kind);
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) s += upstream[i] * out[i];
            return s;
        };
        CHECK(testutil::fd_max_rel_err(loss, e.data(), d, ge.data()) < 1e-6);
        CHECK(testutil::fd_max_rel_err(loss, r.data(), d, gr.data()) < 1e-6);
    }
}

TEST_CASE("rotate backward on the worked example") {
    std::vector<double> e{1, 0}, r{0, 1}, upstream{1, 0};
    std::vector<double> ge, gr;
    phi_backward(e, r, PhiKind::Rotate, upstream, ge, gr);
    auto loss = [&]() {
        auto out = phi(e, r, PhiKind::Rotate);
        return upstream[0] * out[0] + upstream[1] * out[1];
    };
    CHECK(testutil::fd_max_rel_err(loss, e.data(), e.size(), ge.data()) < 1e-6);
    CHECK(testutil::fd_max_rel_err(loss, r.data(), r.size(), gr.data()) < 1e-6);
}

TEST_CASE("gamma backward matches finite differences") {
    std::mt19937_64 rng(33);
    for (GammaKind kind : {GammaKind::WeightedSum, GammaKind::Concat, GammaKind::Mul}) {
        const std::size_t d = 5;
        auto hr = testutil::random_vector(d, rng);
        auto hq = testutil::random_vector(d, rng);
        std::size_t od = kind == GammaKind::Concat ? 2 * d : d;
        auto upstream = testutil::random_vector(od, rng);
        std::vector<double> gr, gq;
        gamma_backward(hr, hq, kind, 0.8, upstream, gr, gq);
        auto loss = [&]() {
            auto out = gamma(hr, hq, kind, 0.8);
            double s = 0.0;
            for (std::size_t i = 0; i < od; ++i) s += upstream[i] * out[i];
            return s;
        };
        CHECK(testutil::fd_max_rel_err(loss, hr.data(), d, gr.data()) < 1e-6);
        CHECK(testutil::fd_max_rel_err(loss, hq.data(), d, gq.data()) < 1e-6);
    }
}
