#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "faa/rng.hpp"

using namespace faa;

TEST_CASE("derived seeds depend on every path element and its order") {
    const std::uint64_t master = 42;
    CHECK(derive_seed(master, {1, 2, 3}) == derive_seed(master, {1, 2, 3}));
    CHECK(derive_seed(master, {1, 2, 3}) != derive_seed(master, {3, 2, 1}));
    CHECK(derive_seed(master, {1, 2}) != derive_seed(master, {1, 2, 0}));
    CHECK(derive_seed(master, StreamTag::Shuffle, {0}) != derive_seed(master, StreamTag::Augment, {0}));
    CHECK(derive_seed(master, {0}) != derive_seed(master + 1, {0}));

    std::set<std::uint64_t> seen;
    for (std::uint64_t f = 0; f < 5; ++f) {
        for (std::uint64_t r = 0; r < 4; ++r) {
            for (std::uint64_t t = 0; t < 50; ++t) {
                seen.insert(derive_seed(master, StreamTag::Evaluate, {f, r, t}));
            }
        }
    }
    CHECK(seen.size() == 5 * 4 * 50);
}

TEST_CASE("same seed gives the same stream") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("uniform lies in [0,1) with mean 1/2 and variance 1/12") {
    Rng rng(1);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sq += u * u;
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sq / n - mean * mean == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("uniform_index is unbiased over a non-power-of-two range") {
    Rng rng(3);
    const std::size_t k = 7;
    const int n = 70000;
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
        const std::size_t v = rng.uniform_index(k);
        REQUIRE(v < k);
        ++counts[v];
    }
    double chi2 = 0.0;
    const double expected = static_cast<double>(n) / k;
    for (int c : counts) {
        chi2 += (c - expected) * (c - expected) / expected;
    }
    // 6 degrees of freedom, 99.9th percentile 22.46
    CHECK(chi2 < 22.46);
    CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("normal has zero mean and unit variance") {
    Rng rng(5);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("bernoulli respects its endpoints") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        CHECK_FALSE(rng.bernoulli(0.0));
        CHECK(rng.bernoulli(1.0));
    }
}
