#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "shelltopics/metrics.hpp"
#include "shelltopics/rng.hpp"

using namespace shelltopics;

namespace {

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& assignment) {
    double acc = 0.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) acc += cost[i][assignment[i]];
    return acc;
}

std::vector<double> random_distribution(Rng& rng, std::size_t dim) {
    std::vector<double> p(dim);
    double tot = 0.0;
    for (auto& v : p) {
        v = rng.uniform() + 1e-3;
        tot += v;
    }
    for (auto& v : p) v /= tot;
    return p;
}

} // namespace

TEST_CASE("hungarian matches exhaustive search on random cost matrices") {
    Rng rng(1234);
    for (int n = 1; n <= 5; ++n) {
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::vector<double>> cost(n, std::vector<double>(n));
            for (auto& row : cost)
                for (auto& v : row) v = rng.uniform() * 10.0;
            auto got = hungarian(cost);
            // permutation property
            std::vector<int> seen(n, 0);
            for (auto j : got) {
                REQUIRE(j >= 0);
                REQUIRE(j < n);
                ++seen[j];
            }
            for (auto s : seen) REQUIRE(s == 1);
            auto best = oracles::brute_hungarian(cost);
            REQUIRE(assignment_cost(cost, got) ==
                    Catch::Approx(assignment_cost(cost, best)).margin(1e-10));
        }
    }
    REQUIRE(hungarian({}).empty());
    REQUIRE_THROWS_AS(hungarian({{1.0, 2.0}}), ModelError);
}

TEST_CASE("jensen-shannon divergence has its closed-form extremes") {
    std::vector<double> p{1.0, 0.0}, q{0.0, 1.0};
    REQUIRE(jensen_shannon(p, q) == Catch::Approx(std::log(2.0)).margin(1e-12));
    REQUIRE(jensen_shannon(p, p) == Catch::Approx(0.0).margin(1e-12));
    std::vector<double> u{0.5, 0.5};
    // JSD(p, uniform) = ln 2 - H(uniform)/... frozen direct value:
    // 0.5*[1*ln(1/.75)] + 0.5*[.5*ln(.5/.75) + .5*ln(.5/.25)]
    double expected = 0.5 * std::log(1.0 / 0.75) +
                      0.5 * (0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25));
    REQUIRE(jensen_shannon(p, u) == Catch::Approx(expected).margin(1e-12));
    REQUIRE_THROWS_AS(jensen_shannon(p, std::vector<double>{1.0, 0.0, 0.0}), ModelError);
}

TEST_CASE("jensen-shannon divergence is symmetric and bounded by ln 2") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t dim = 2 + rng.uniform_index(6);
        auto p = random_distribution(rng, dim);
        auto q = random_distribution(rng, dim);
        double ab = jensen_shannon(p, q), ba = jensen_shannon(q, p);
        REQUIRE(ab == Catch::Approx(ba).margin(1e-12));
        REQUIRE(ab >= 0.0);
        REQUIRE(ab <= std::log(2.0) + 1e-12);
    }
}

TEST_CASE("generalized jensen-shannon reduces to the pairwise form") {
    std::vector<std::vector<double>> disjoint{{1.0, 0.0}, {0.0, 1.0}};
    REQUIRE(generalized_jensen_shannon(disjoint) ==
            Catch::Approx(std::log(2.0)).margin(1e-12));
    std::vector<std::vector<double>> same{{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}};
    REQUIRE(generalized_jensen_shannon(same) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(generalized_jensen_shannon({}) == 0.0);

    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> dists;
        for (int i = 0; i < 4; ++i) dists.push_back(random_distribution(rng, 5));
        double g = generalized_jensen_shannon(dists);
        REQUIRE(g >= 0.0);
        // two-distribution case must agree with the pairwise function
        double pairwise = jensen_shannon(dists[0], dists[1]);
        double general2 = generalized_jensen_shannon({dists[0], dists[1]});
        REQUIRE(general2 == Catch::Approx(pairwise).margin(1e-12));
    }
    REQUIRE_THROWS_AS(generalized_jensen_shannon({{0.5, 0.5}, {1.0}}), ModelError);
}

TEST_CASE("adjusted rand index reproduces a hand-computed contingency table") {
    std::vector<std::int32_t> a{0, 0, 0, 1, 1, 1};
    std::vector<std::int32_t> b{0, 0, 1, 1, 2, 2};
    // contingency {{2,1,0},{0,1,2}}: index 2, expected 6*3/15, max 4.5
    REQUIRE(adjusted_rand_index(a, b) == Catch::Approx(8.0 / 33.0).margin(1e-12));
}

TEST_CASE("adjusted rand index is one exactly for matching partitions") {
    std::vector<std::int32_t> a{0, 1, 0, 2, 1};
    std::vector<std::int32_t> b{5, 7, 5, 9, 7};  // same partition, shifted labels
    REQUIRE(adjusted_rand_index(a, b) == 1.0);
    std::vector<std::int32_t> trivial(4, 3);
    REQUIRE(adjusted_rand_index(trivial, trivial) == 1.0);
    std::vector<std::int32_t> single{2};
    REQUIRE(adjusted_rand_index(single, single) == 1.0);
    REQUIRE(adjusted_rand_index(std::vector<std::int32_t>{},
                                std::vector<std::int32_t>{}) == 1.0);
    REQUIRE_THROWS_AS(adjusted_rand_index(a, single), ModelError);
}

TEST_CASE("adjusted rand index agrees with direct pair counting") {
    Rng rng(2718);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + rng.uniform_index(11);
        std::vector<std::int32_t> a(n), b(n);
        for (auto& v : a) v = static_cast<std::int32_t>(rng.uniform_index(4));
        for (auto& v : b) v = static_cast<std::int32_t>(rng.uniform_index(4));
        double lib = adjusted_rand_index(a, b);
        double ref = oracles::pair_ari(a, b);
        REQUIRE(lib == Catch::Approx(ref).margin(1e-12));
        REQUIRE(lib <= 1.0 + 1e-12);
        REQUIRE(lib >= -1.0 - 1e-12);
    }
}

TEST_CASE("adjusted rand index ignores label names and item order") {
    Rng rng(31415);
    std::vector<std::int32_t> a{0, 0, 1, 2, 2, 1, 0, 3};
    std::vector<std::int32_t> b{1, 1, 0, 0, 2, 2, 1, 2};
    double base = adjusted_rand_index(a, b);

    // rename labels of either argument
    std::vector<std::int32_t> a2(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) a2[i] = 17 - 3 * a[i];
    REQUIRE(adjusted_rand_index(a2, b) == Catch::Approx(base).margin(1e-12));

    // permute items jointly
    auto perm = rng.permutation(static_cast<int>(a.size()));
    std::vector<std::int32_t> ap(a.size()), bp(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ap[i] = a[perm[i]];
        bp[i] = b[perm[i]];
    }
    REQUIRE(adjusted_rand_index(ap, bp) == Catch::Approx(base).margin(1e-12));
}
