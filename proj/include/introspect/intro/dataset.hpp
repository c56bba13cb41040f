#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/history/store.hpp"
#include "introspect/rng.hpp"

namespace introspect::intro {

// One forecasting example: four history taps of a single weight and the
// future value it should map to, all in scaled (×1000) space.
// x = [w(t), w(⌊0.7t⌋), w(⌊0.4t⌋), w(0)]·1000, y = w(⌊k·t⌋)·1000.
struct WeightSample {
    int64_t flat_index = 0;
    int64_t t = 0;
    double k = 2.0;
    std::array<float, 4> x{};
    float y = 0.0f;

    bool operator==(const WeightSample&) const = default;
};

struct BuildConfig {
    int64_t sample_count = 50000;
    double k = 2.0;
    // -1 → derive: t_min = 10% of the last recorded step, t_max = the largest
    // t whose target ⌊k·t⌋ still fits inside the recorded run.
    int64_t t_min = -1;
    int64_t t_max = -1;
    std::array<double, 3> fractions{0.5, 0.25, 0.25};  // top-50 / 50-75 / 75-100
    double val_fraction = 0.10;
    uint64_t seed = 0;
};

struct IntroDataset {
    std::vector<WeightSample> train;
    std::vector<WeightSample> val;
    double k = 2.0;
};

namespace detail {

// Largest-remainder rounding of fractions*total; stays within ±1 of exact.
inline std::array<int64_t, 3> allocate_strata(const std::array<double, 3>& fractions,
                                              int64_t total) {
    std::array<int64_t, 3> counts{};
    std::array<double, 3> remainders{};
    int64_t assigned = 0;
    for (size_t i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(total);
        counts[i] = static_cast<int64_t>(std::floor(exact));
        remainders[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    while (assigned < total) {
        size_t best = 0;
        for (size_t i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best]) best = i;
        ++counts[best];
        remainders[best] = -1.0;
        ++assigned;
    }
    return counts;
}

inline bool weight_in_val(uint64_t seed, int64_t flat_index, double val_fraction) {
    rng::Stream s(rng::derive_key({seed, 0x73706c74ull /* "splt" */,
                                   static_cast<uint64_t>(flat_index)}));
    return s.uniform01() < val_fraction;
}

}  // namespace detail

inline int64_t scaled_target_step(double k, int64_t t) {
    return static_cast<int64_t>(std::floor(k * static_cast<double>(t) + 1e-9));
}

// Stratified sampler over a recorded run. Per sample: draw a step t uniformly
// from the stride-aligned recorded steps in [t_min, t_max], rank all weights
// by |w(t)−w(0)| descending, draw a rank uniformly inside the sample's
// stratum, and read the four taps plus the ⌊k·t⌋ target from the store.
// The train/validation split is by weight index so no weight's trajectory
// leaks across the splits.
inline IntroDataset build_dataset(const history::SnapshotStore& store, const BuildConfig& cfg) {
    if (cfg.sample_count <= 0) throw SpecError("build_dataset: sample_count must be > 0");
    if (!(cfg.k > 1.0)) throw SpecError("build_dataset: k must be > 1");
    const double frac_sum = cfg.fractions[0] + cfg.fractions[1] + cfg.fractions[2];
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw SpecError("build_dataset: strata fractions must sum to 1");
    if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0))
        throw SpecError("build_dataset: val_fraction must lie in [0, 1)");

    const std::vector<int64_t> recorded = store.steps();
    if (recorded.empty()) throw EmptyDataset("build_dataset: store has no snapshots");
    const int64_t last_step = recorded.back();

    int64_t t_min = cfg.t_min >= 0 ? cfg.t_min : (last_step + 9) / 10;
    int64_t t_max = cfg.t_max >= 0
                        ? cfg.t_max
                        : static_cast<int64_t>(std::floor(static_cast<double>(last_step) / cfg.k));
    t_min = std::max<int64_t>(t_min, 1);

    // Candidate steps: recorded, stride-aligned, inside [t_min, t_max]. The
    // stride alignment matches required_steps' dataset closure, which only
    // guarantees {0.4t, 0.7t, t, kt} snapshots for stride multiples.
    const int64_t stride = std::max<int64_t>(store.meta().stride, 1);
    std::vector<int64_t> candidates;
    for (int64_t s : recorded)
        if (s >= t_min && s <= t_max && s % stride == 0) candidates.push_back(s);
    if (candidates.empty())
        throw RangeError("build_dataset: no recorded steps in t range [" +
                         std::to_string(t_min) + ", " + std::to_string(t_max) + "]");

    const int64_t weight_count = store.param_count();
    // Rank boundaries at the 50th and 75th percentile of the descending order.
    const auto c1 = static_cast<int64_t>(std::floor(weight_count * cfg.fractions[0]));
    const auto c2 =
        static_cast<int64_t>(std::floor(weight_count * (cfg.fractions[0] + cfg.fractions[1])));
    if (c1 < 1 || c2 <= c1 || c2 >= weight_count)
        throw SpecError("build_dataset: too few weights to stratify (" +
                        std::to_string(weight_count) + ")");
    const std::array<std::pair<int64_t, int64_t>, 3> rank_ranges{
        std::pair<int64_t, int64_t>{0, c1}, {c1, c2}, {c2, weight_count}};

    const std::array<int64_t, 3> per_stratum =
        detail::allocate_strata(cfg.fractions, cfg.sample_count);

    // Cache the descending-|w(t)−w(0)| ordering per distinct t.
    const std::vector<float>& w0 = store.lookup_exact(0);
    std::map<int64_t, std::vector<int32_t>> rank_cache;
    const auto ranked_for = [&](int64_t t) -> const std::vector<int32_t>& {
        auto it = rank_cache.find(t);
        if (it != rank_cache.end()) return it->second;
        const std::vector<float>& wt = store.lookup_exact(t);
        std::vector<float> variation(static_cast<size_t>(weight_count));
        for (int64_t i = 0; i < weight_count; ++i)
            variation[static_cast<size_t>(i)] =
                std::abs(wt[static_cast<size_t>(i)] - w0[static_cast<size_t>(i)]);
        std::vector<int32_t> order(static_cast<size_t>(weight_count));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
            return variation[static_cast<size_t>(a)] > variation[static_cast<size_t>(b)];
        });
        return rank_cache.emplace(t, std::move(order)).first->second;
    };

    IntroDataset out;
    out.k = cfg.k;
    out.train.reserve(static_cast<size_t>(cfg.sample_count));
    int64_t sample_id = 0;
    for (size_t stratum = 0; stratum < 3; ++stratum) {
        const auto [lo, hi] = rank_ranges[stratum];
        for (int64_t n = 0; n < per_stratum[stratum]; ++n, ++sample_id) {
            rng::Stream s(rng::derive_key({cfg.seed, 0x73616d70ull /* "samp" */,
                                           static_cast<uint64_t>(sample_id)}));
            const int64_t t = candidates[s.below(candidates.size())];
            const auto& ranked = ranked_for(t);
            const int64_t rank = lo + static_cast<int64_t>(s.below(static_cast<uint64_t>(hi - lo)));
            const int32_t flat = ranked[static_cast<size_t>(rank)];

            const std::vector<float>& wt = store.lookup_exact(t);
            const std::vector<float>& w7 = store.lookup_exact(t * 7 / 10);
            const std::vector<float>& w4 = store.lookup_exact(t * 4 / 10);
            const std::vector<float>& wk = store.lookup_exact(scaled_target_step(cfg.k, t));

            WeightSample sample;
            sample.flat_index = flat;
            sample.t = t;
            sample.k = cfg.k;
            const auto idx = static_cast<size_t>(flat);
            sample.x = {wt[idx] * 1000.0f, w7[idx] * 1000.0f, w4[idx] * 1000.0f,
                        w0[idx] * 1000.0f};
            sample.y = wk[idx] * 1000.0f;

            if (detail::weight_in_val(cfg.seed, flat, cfg.val_fraction))
                out.val.push_back(sample);
            else
                out.train.push_back(sample);
        }
    }
    return out;
}

// CSV persistence (flat_index,t,k,x0,x1,x2,x3,y); %.9g keeps f32 exact.
inline void save_samples_csv(const std::vector<WeightSample>& samples,
                             const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot create " + path.string());
    out << "flat_index,t,k,x0,x1,x2,x3,y\n";
    char buf[256];
    for (const WeightSample& s : samples) {
        std::snprintf(buf, sizeof(buf), "%lld,%lld,%.17g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(s.flat_index), static_cast<long long>(s.t), s.k,
                      static_cast<double>(s.x[0]), static_cast<double>(s.x[1]),
                      static_cast<double>(s.x[2]), static_cast<double>(s.x[3]),
                      static_cast<double>(s.y));
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<WeightSample> load_samples_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("samples csv: empty file " + path.string());
    if (line != "flat_index,t,k,x0,x1,x2,x3,y")
        throw FormatError("samples csv: unexpected header in " + path.string());
    std::vector<WeightSample> samples;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        WeightSample s;
        long long flat = 0, t = 0;
        double k = 0, x0 = 0, x1 = 0, x2 = 0, x3 = 0, y = 0;
        if (std::sscanf(line.c_str(), "%lld,%lld,%lf,%lf,%lf,%lf,%lf,%lf", &flat, &t, &k, &x0,
                        &x1, &x2, &x3, &y) != 8)
            throw FormatError("samples csv: malformed row '" + line + "'");
        s.flat_index = flat;
        s.t = t;
        s.k = k;
        s.x = {static_cast<float>(x0), static_cast<float>(x1), static_cast<float>(x2),
               static_cast<float>(x3)};
        s.y = static_cast<float>(y);
        samples.push_back(s);
    }
    return samples;
}

}  // namespace introspect::intro
