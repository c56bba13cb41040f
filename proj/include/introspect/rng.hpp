#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <vector>

namespace introspect::rng {

// Counter-based deterministic RNG. Every draw is a pure function of a 64-bit
// key and a counter, so independently keyed consumers produce the same values
// no matter in which order (or on how many threads) they run. All experiment
// randomness in this library flows through here; std distributions are
// avoided because their output is implementation-defined.

inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Folds tuple parts into one stream key (hash-combine with a strong finisher).
inline uint64_t derive_key(std::initializer_list<uint64_t> parts) {
    uint64_t k = 0x9e3779b97f4a7c15ull;
    for (uint64_t p : parts) k = mix64(k ^ (p + 0x9e3779b97f4a7c15ull + (k << 6) + (k >> 2)));
    return k;
}

class Stream {
public:
    explicit Stream(uint64_t key) : key_(key) {}

    uint64_t next_u64() {
        counter_ += 0x9e3779b97f4a7c15ull;
        return mix64(key_ + counter_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased draw in [0, n) (Lemire's method with rejection).
    uint64_t below(uint64_t n) {
        auto m = static_cast<__uint128_t>(next_u64()) * n;
        auto lo = static_cast<uint64_t>(m);
        if (lo < n) {
            const uint64_t threshold = -n % n;
            while (lo < threshold) {
                m = static_cast<__uint128_t>(next_u64()) * n;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal clipped to mean +/- clip*stddev by resampling.
    double truncated_normal(double mean, double stddev, double clip = 2.0) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= clip) return mean + stddev * z;
        }
    }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

// Deterministic Fisher-Yates; std::shuffle is not reproducible across
// standard library implementations.
template <class T>
void shuffle(std::vector<T>& items, Stream& stream) {
    for (size_t i = items.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(stream.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace introspect::rng
