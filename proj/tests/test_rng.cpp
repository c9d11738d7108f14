#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "shelltopics/rng.hpp"

using namespace shelltopics;

TEST_CASE("stream derivation is deterministic and streams are distinct") {
    REQUIRE(derive_stream_seed(42, 0) == derive_stream_seed(42, 0));
    REQUIRE(derive_stream_seed(42, 0) != derive_stream_seed(42, 1));
    REQUIRE(derive_stream_seed(42, 0) != derive_stream_seed(43, 0));

    Rng a = Rng::for_stream(42, 3);
    Rng b(derive_stream_seed(42, 3));
    for (int i = 0; i < 16; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform stays in [0,1) and matches the engine formula") {
    Rng r(7);
    std::mt19937_64 ref(7);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        double expect = static_cast<double>(ref() >> 11) * 0x1.0p-53;
        REQUIRE(u == expect);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("uniform_index covers its range and rejects zero") {
    Rng r(11);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) ++hits[r.uniform_index(5)];
    for (int h : hits) REQUIRE(h > 0);
    REQUIRE_THROWS(r.uniform_index(0));
}

TEST_CASE("permutation returns each index exactly once") {
    Rng r(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = r.permutation(17);
        auto sorted = p;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < 17; ++i) REQUIRE(sorted[i] == i);
    }
}

TEST_CASE("categorical follows unnormalized weights") {
    Rng r(19);
    std::vector<double> w{1.0, 3.0};
    int ones = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) ones += r.categorical(w) == 1;
    double frac = static_cast<double>(ones) / n;
    REQUIRE(frac == Catch::Approx(0.75).margin(0.02));

    std::vector<double> logw{std::log(1.0), std::log(3.0)};
    ones = 0;
    for (int i = 0; i < n; ++i) ones += r.categorical_log(logw) == 1;
    frac = static_cast<double>(ones) / n;
    REQUIRE(frac == Catch::Approx(0.75).margin(0.02));

    std::vector<double> zero{0.0, 0.0};
    REQUIRE_THROWS(r.categorical(zero));
}

TEST_CASE("dirichlet draws sum to one with correct mean") {
    Rng r(23);
    std::vector<double> conc{2.0, 1.0, 1.0};
    std::vector<double> mean(3, 0.0);
    const int n = 4000;
    for (int i = 0; i < n; ++i) {
        auto x = r.dirichlet(conc);
        double total = x[0] + x[1] + x[2];
        REQUIRE(total == Catch::Approx(1.0).margin(1e-12));
        for (int c = 0; c < 3; ++c) mean[c] += x[c] / n;
    }
    REQUIRE(mean[0] == Catch::Approx(0.5).margin(0.03));
    REQUIRE(mean[1] == Catch::Approx(0.25).margin(0.03));
}

TEST_CASE("bernoulli frequency tracks p") {
    Rng r(31);
    int ones = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) ones += r.bernoulli(0.3);
    REQUIRE(static_cast<double>(ones) / n == Catch::Approx(0.3).margin(0.02));
}

TEST_CASE("identical seeds give identical draw sequences") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());
}
