#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "localprompt/numerics.hpp"
#include "localprompt/rng.hpp"
#include "support.hpp"

using namespace lp;
using testing_support::throws_code;

TEST_CASE("cosine of identical, orthogonal and 45-degree vectors") {
    const Vec e1{1, 0, 0}, e2{0, 1, 0};
    CHECK(cosine_sim(e1, e1) == 1.0);
    CHECK(cosine_sim(e1, e2) == 0.0);
    CHECK(cosine_sim(Vec{1, 1}, Vec{1, 0}) == doctest::Approx(0.70710678).epsilon(1e-9));
}

TEST_CASE("cosine rejects near-zero vectors") {
    CHECK(throws_code([] { cosine_sim(Vec{0, 0}, Vec{1, 0}); }, ErrorCode::ZeroNormVector));
    CHECK(throws_code([] { cosine_sim(Vec{1, 0}, Vec{1e-13, 0}); }, ErrorCode::ZeroNormVector));
}

TEST_CASE("cosine properties on random vectors") {
    std::mt19937_64 g(1);
    for (int t = 0; t < 500; ++t) {
        const Vec a = testing_support::random_vec(g, 7);
        const Vec b = testing_support::random_vec(g, 7);
        Vec ca = a;
        const double c = std::exp(testing_support::gauss(g) * 3);
        for (double& x : ca) x *= c;
        CHECK(cosine_sim(a, ca) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cosine_sim(a, b) == cosine_sim(b, a));
        CHECK(std::abs(cosine_sim(a, b)) <= 1.0 + 1e-12);
    }
}

TEST_CASE("softmax values") {
    const auto u = softmax(Vec{0.5, 0.5, 0.5}, 1.0);
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
    const auto s = softmax(Vec{10, 0}, 1.0);
    CHECK(std::abs(s[0] - 0.9999546) < 1e-6);
    CHECK(std::abs(s[1] - 0.0000454) < 1e-6);
}

TEST_CASE("softmax errors") {
    CHECK(throws_code([] { softmax(Vec{1, 2}, 0.0); }, ErrorCode::NonPositiveTemperature));
    CHECK(throws_code([] { softmax(Vec{1, 2}, -1.0); }, ErrorCode::NonPositiveTemperature));
    CHECK(throws_code([] { softmax(Vec{}, 1.0); }, ErrorCode::EmptyInput));
}

TEST_CASE("softmax sums to one and keeps the argmax at every temperature") {
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int t = 0; t < 300; ++t) {
        Vec x(1 + t % 20);
        for (double& v : x) v = u(g);
        for (double T : {0.01, 1.0, 100.0}) {
            const auto p = softmax(x, T);
            CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(argmax(p) == argmax(x));
        }
    }
}

TEST_CASE("topk sum and mean") {
    CHECK(topk_sum(Vec{3, 1, 2}, 2) == 5.0);
    CHECK(topk_sum(Vec{3, 1, 2}, 10) == 6.0);
    CHECK(topk_sum(Vec{0.2, 0.8, 0.8, 0.1}, 2) == doctest::Approx(1.6));
    CHECK(topk_mean(Vec{3, 1, 2}, 2) == 2.5);
    CHECK(topk_mean(Vec{5}, 3) == 5.0);
    CHECK(throws_code([] { topk_sum(Vec{}, 1); }, ErrorCode::EmptyInput));
    CHECK(throws_code([] { topk_mean(Vec{}, 1); }, ErrorCode::EmptyInput));
}

TEST_CASE("topk support ties go to the lowest index") {
    CHECK(topk_support(Vec{3, 1, 2}, 2) == std::vector<std::size_t>{0, 2});
    CHECK(topk_support(Vec{1, 1, 1}, 2) == std::vector<std::size_t>{0, 1});
    CHECK(topk_support(Vec{0.2, 0.9, 0.9}, 1) == std::vector<std::size_t>{1});
    CHECK(topk_support(Vec{4, 5}, 7) == std::vector<std::size_t>{0, 1});
    CHECK(throws_code([] { topk_support(Vec{}, 1); }, ErrorCode::EmptyInput));
}

TEST_CASE("topk identities against a full sort") {
    std::mt19937_64 g(3);
    for (int t = 0; t < 300; ++t) {
        Vec x(1 + t % 17);
        for (double& v : x) v = testing_support::gauss(g);
        if (t % 5 == 0) x[0] = x.back();  // plant a duplicate
        const double mx = *std::max_element(x.begin(), x.end());
        CHECK(topk_sum(x, 1) == mx);
        CHECK(topk_mean(x, 1) == mx);
        CHECK(topk_sum(x, x.size()) == doctest::Approx(std::accumulate(x.begin(), x.end(), 0.0)).epsilon(1e-12));
        CHECK(topk_mean(x, x.size()) ==
              doctest::Approx(std::accumulate(x.begin(), x.end(), 0.0) / x.size()).epsilon(1e-12));
        const std::size_t k = 1 + t % 6;
        CHECK(topk_sum(x, k) == doctest::Approx(naive::topk_sum(x, k)).epsilon(1e-12));
        // support sums to the same value
        double s = 0;
        for (auto i : topk_support(x, k)) s += x[i];
        CHECK(s == doctest::Approx(topk_sum(x, k)).epsilon(1e-12));
        // monotone in every element
        Vec y = x;
        y[t % y.size()] += std::abs(testing_support::gauss(g));
        CHECK(topk_sum(y, k) >= topk_sum(x, k));
    }
}

TEST_CASE("argmax and clamped exp") {
    CHECK(argmax(Vec{1, 3, 3}) == 1);
    CHECK(throws_code([] { argmax(Vec{}); }, ErrorCode::EmptyInput));
    CHECK(clamped_exp(0.0) == 1.0);
    CHECK(clamped_exp(1000.0) == std::exp(kExpClamp));
    CHECK(std::isfinite(clamped_exp(1e300)));
}

TEST_CASE("binary32 rounding is idempotent") {
    Vec x{0.1, 1.0 / 3.0, 1e-40, -2.5};
    round_to_binary32(x);
    CHECK(x[0] == static_cast<double>(0.1f));
    CHECK(x[3] == -2.5);
    Vec y = x;
    round_to_binary32(y);
    CHECK(x == y);
    CHECK(all_finite(x));
    CHECK_FALSE(all_finite(Vec{1.0, std::nan("")}));
}

TEST_CASE("seeded rng is reproducible and mixes seeds") {
    Rng a(5), b(5);
    for (int i = 0; i < 50; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(6);
    std::vector<std::size_t> seen(7, 0);
    for (int i = 0; i < 7000; ++i) ++seen[c.below(7)];
    for (auto n : seen) CHECK(n > 800);
    CHECK(mix_seed(1, 2) != mix_seed(2, 1));
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}
