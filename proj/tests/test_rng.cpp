#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "introspect/rng.hpp"

using namespace introspect;

TEST_CASE("stream is a pure function of its key", "[rng]") {
    rng::Stream a(42), b(42), c(43);
    std::vector<uint64_t> va, vb, vc;
    for (int i = 0; i < 100; ++i) {
        va.push_back(a.next_u64());
        vb.push_back(b.next_u64());
        vc.push_back(c.next_u64());
    }
    CHECK(va == vb);
    CHECK(va != vc);
}

TEST_CASE("derive_key distinguishes order and content", "[rng]") {
    CHECK(rng::derive_key({1, 2}) != rng::derive_key({2, 1}));
    CHECK(rng::derive_key({1, 2}) != rng::derive_key({1, 3}));
    CHECK(rng::derive_key({1, 2}) == rng::derive_key({1, 2}));
    CHECK(rng::derive_key({1}) != rng::derive_key({1, 0}));
}

TEST_CASE("uniform01 stays in [0,1)", "[rng]") {
    rng::Stream s(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("uniform(lo,hi) respects bounds", "[rng]") {
    rng::Stream s(11);
    for (int i = 0; i < 10000; ++i) {
        const double u = s.uniform(-2.5, 3.5);
        REQUIRE(u >= -2.5);
        REQUIRE(u < 3.5);
    }
}

TEST_CASE("below(n) is bounded and roughly uniform", "[rng]") {
    rng::Stream s(13);
    std::vector<int64_t> buckets(10, 0);
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
        const uint64_t v = s.below(10);
        REQUIRE(v < 10);
        ++buckets[static_cast<size_t>(v)];
    }
    for (int64_t count : buckets) {
        CHECK(count > 9300);   // ±7σ around 10000
        CHECK(count < 10700);
    }
}

TEST_CASE("normal draws have the requested moments", "[rng]") {
    rng::Stream s(17);
    constexpr int kDraws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < kDraws; ++i) {
        const double x = s.normal();
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / kDraws;
    const double var = sum_sq / kDraws - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);

    rng::Stream t(19);
    double shifted = 0.0;
    for (int i = 0; i < kDraws; ++i) shifted += t.normal(3.0, 0.5);
    CHECK(std::abs(shifted / kDraws - 3.0) < 0.02);
}

TEST_CASE("truncated normal never exceeds the clip radius", "[rng]") {
    rng::Stream s(23);
    for (int i = 0; i < 100000; ++i) {
        const double x = s.truncated_normal(0.5, 0.01, 2.0);
        REQUIRE(std::abs(x - 0.5) <= 2.0 * 0.01);
    }
}

TEST_CASE("shuffle permutes deterministically", "[rng]") {
    std::vector<int> original(100);
    std::iota(original.begin(), original.end(), 0);

    std::vector<int> a = original, b = original, c = original;
    rng::Stream sa(5), sb(5), sc(6);
    rng::shuffle(a, sa);
    rng::shuffle(b, sb);
    rng::shuffle(c, sc);

    CHECK(a == b);
    CHECK(a != c);  // 1/100! chance of collision
    std::sort(a.begin(), a.end());
    CHECK(a == original);
    std::sort(c.begin(), c.end());
    CHECK(c == original);
}
