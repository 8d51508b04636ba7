#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "math_ops.hpp"
#include "oracles.hpp"
#include "rng.hpp"

using iace::Embedding;
using iace::Vec;
using testutil::random_unit;

namespace {

Embedding axis(std::size_t dim, std::size_t i, double sign = 1.0) {
    Vec v(dim, 0.0);
    v[i] = sign;
    return Embedding{v};
}

constexpr double kQuarterTurnLoss = 1.2337005501361697;  // pi^2 / 8
constexpr double kHalfTurnLoss = 4.934802200544679;      // pi^2 / 2

}  // namespace

TEST_CASE("spherical loss hits the endpoint values") {
    const Embedding e0 = axis(8, 0);
    const Embedding e1 = axis(8, 1);
    const Embedding neg = axis(8, 0, -1.0);

    CHECK(std::abs(iace::spherical_loss(e0, e0)) <= 1e-12);
    CHECK(std::abs(iace::spherical_loss(e0, e1) - kQuarterTurnLoss) <= 1e-9);
    CHECK(std::abs(iace::spherical_loss(e0, neg) - kHalfTurnLoss) <= 1e-9);

    iace::Rng rng(41);
    const Embedding t{random_unit(rng, 16)};
    CHECK(std::abs(iace::spherical_loss(t, t)) <= 1e-12);
    Embedding anti{t.values};
    for (double& x : anti.values) x = -x;
    CHECK(std::abs(iace::spherical_loss(t, anti) - kHalfTurnLoss) <= 1e-9);
}

TEST_CASE("spherical loss agrees with the angle form") {
    iace::Rng rng(7);
    for (std::size_t dim : {2u, 3u, 16u, 64u}) {
        for (int rep = 0; rep < 10; ++rep) {
            const Embedding t{random_unit(rng, dim)};
            const Embedding v{random_unit(rng, dim)};
            const double got = iace::spherical_loss(t, v);
            const double want = testutil::spherical_loss_angle_form(t.values, v.values);
            CHECK(std::abs(got - want) <= 1e-9 * std::max(1.0, want));
        }
    }
}

TEST_CASE("spherical loss is symmetric and bounded") {
    iace::Rng rng(19);
    for (int rep = 0; rep < 25; ++rep) {
        const Embedding t{random_unit(rng, 12)};
        const Embedding v{random_unit(rng, 12)};
        const double a = iace::spherical_loss(t, v);
        CHECK(a == iace::spherical_loss(v, t));
        CHECK(a >= 0.0);
        CHECK(a <= kHalfTurnLoss + 1e-12);
    }
}

TEST_CASE("spherical loss rejects non-unit inputs") {
    Vec big(4, 1.0);  // norm 2
    const Embedding t = axis(4, 0);
    auto code = testutil::error_code_of([&] { iace::spherical_loss(t, Embedding{big}); });
    REQUIRE(code.has_value());
    CHECK(*code == iace::ErrorCode::precondition);
}

TEST_CASE("spherical gradient matches central differences") {
    iace::Rng rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        const Embedding t{random_unit(rng, 16)};
        const Embedding v{random_unit(rng, 16)};
        const Vec analytic = iace::spherical_loss_grad(t, v);
        auto f = [&](const Vec& x) { return iace::spherical_loss(t, Embedding{x}); };
        CHECK(testutil::fd_check(f, v.values, analytic, 1e-6) <= 1e-5);
    }
}

TEST_CASE("spherical gradient near the antipode is finite and accurate") {
    iace::Rng rng(29);
    const Embedding t{random_unit(rng, 16)};
    Vec v = t.values;
    for (double& x : v) x = -x;
    // far enough off the antipode that the asin pole does not swallow the
    // finite-difference probe, close enough that the gradient is still steep
    v[3] += 1e-2;
    const Embedding ve = iace::l2_normalize(v);

    const Vec analytic = iace::spherical_loss_grad(t, ve);
    for (double g : analytic) CHECK(std::isfinite(g));
    auto f = [&](const Vec& x) { return iace::spherical_loss(t, Embedding{x}); };
    CHECK(testutil::fd_check(f, ve.values, analytic, 1e-8) <= 1e-3);

    // exactly antipodal: still finite, no NaN from the arcsin pole
    Vec anti = t.values;
    for (double& x : anti) x = -x;
    for (double g : iace::spherical_loss_grad(t, Embedding{anti})) CHECK(std::isfinite(g));
}

TEST_CASE("spherical gradient is zero exactly at the target") {
    iace::Rng rng(31);
    const Embedding t{random_unit(rng, 8)};
    for (double g : iace::spherical_loss_grad(t, t)) CHECK(g == 0.0);
}

TEST_CASE("spherical gradient points along v - t") {
    iace::Rng rng(37);
    const Embedding t{random_unit(rng, 8)};
    const Embedding v{random_unit(rng, 8)};
    const Vec g = iace::spherical_loss_grad(t, v);
    // g = c * (v - t) with c > 0: cross-ratios match and signs agree
    Vec d(8);
    for (std::size_t i = 0; i < 8; ++i) d[i] = v.values[i] - t.values[i];
    for (std::size_t i = 1; i < 8; ++i) {
        CHECK(std::abs(g[i] * d[0] - g[0] * d[i]) <= 1e-12);
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < 8; ++i) dot += g[i] * d[i];
    CHECK(dot > 0.0);
}

TEST_CASE("l2_normalize returns unit vectors and preserves direction") {
    const Embedding e = iace::l2_normalize({3.0, 4.0});
    CHECK(std::abs(e.values[0] - 0.6) <= 1e-15);
    CHECK(std::abs(e.values[1] - 0.8) <= 1e-15);
    CHECK(iace::is_unit_norm(e.values));

    iace::Rng rng(43);
    const Vec x = rng.normal_vector(32, 5.0);
    const Embedding n = iace::l2_normalize(x);
    double norm = 0.0;
    for (double v : n.values) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) <= 1e-12);
}

TEST_CASE("l2_normalize rejects degenerate input") {
    auto zero = testutil::error_code_of([] { iace::l2_normalize(Vec(4, 0.0)); });
    REQUIRE(zero.has_value());
    CHECK(*zero == iace::ErrorCode::invalid_argument);

    Vec bad = {1.0, std::nan(""), 0.0};
    auto nan = testutil::error_code_of([&] { iace::l2_normalize(bad); });
    REQUIRE(nan.has_value());
    CHECK(*nan == iace::ErrorCode::invalid_argument);

    auto empty = testutil::error_code_of([] { iace::l2_normalize(Vec{}); });
    REQUIRE(empty.has_value());
}

TEST_CASE("is_unit_norm tolerance band") {
    Vec v = {1.0, 0.0};
    CHECK(iace::is_unit_norm(v));
    v[0] = 1.0 + 0.5e-6;
    CHECK(iace::is_unit_norm(v));
    v[0] = 1.0 + 5e-6;
    CHECK(!iace::is_unit_norm(v));
    CHECK(iace::is_unit_norm(v, 1e-5));
}

TEST_CASE("softmax normalizes and shifts cancel") {
    const Vec logits = {1.0, 2.0, 3.0, -1.0};
    const Vec p = iace::softmax(logits);
    double sum = 0.0;
    for (double x : p) {
        CHECK(x > 0.0);
        sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    Vec shifted = logits;
    for (double& x : shifted) x += 1000.0;
    const Vec q = iace::softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
}

TEST_CASE("log_softmax_at is stable and consistent with softmax") {
    const Vec logits = {900.0, 901.0, 899.5};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double direct = iace::log_softmax_at(logits, i);
        CHECK(std::isfinite(direct));
        CHECK(std::abs(direct - std::log(iace::softmax(logits)[i])) <= 1e-9);
    }
    const Vec uniform(4, 0.25);
    CHECK(std::abs(iace::log_softmax_at(uniform, 2) + std::log(4.0)) <= 1e-12);
}

TEST_CASE("self attention is permutation equivariant") {
    iace::Rng rng(53);
    const std::size_t n = 5, dim = 8;
    iace::Matrix tokens(n, dim);
    for (auto& x : tokens.data) x = rng.next_normal();
    const auto params = iace::seeded_attention_params(dim, 2, 4, 99);

    const iace::Matrix out = iace::multi_head_self_attention(tokens, params);
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    iace::Matrix shuffled(n, dim);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dim; ++c) shuffled.at(r, c) = tokens.at(perm[r], c);
    }
    const iace::Matrix out_shuffled = iace::multi_head_self_attention(shuffled, params);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            CHECK(std::abs(out_shuffled.at(r, c) - out.at(perm[r], c)) <= 1e-12);
        }
    }
}
