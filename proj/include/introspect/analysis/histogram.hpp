#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/history/store.hpp"
#include "introspect/rng.hpp"

namespace introspect::analysis {

enum class HistMetric : uint8_t {
    final_minus_initial,  // signed d = w(T) − w(0)
    sqrt_second_moment,   // M = sqrt(mean over recorded steps>0 of (w(s)−w(0))²)
};

inline std::string to_string(HistMetric m) {
    return m == HistMetric::final_minus_initial ? "final-minus-initial" : "sqrt-second-moment";
}

struct HistogramSpec {
    HistMetric metric = HistMetric::final_minus_initial;
    int64_t bins = 101;
    bool log_frequency = false;  // emit log10(count+1) alongside raw counts
};

struct Histogram {
    HistMetric metric = HistMetric::final_minus_initial;
    std::vector<double> edges;   // bins+1 uniform edges
    std::vector<int64_t> counts; // per bin; sums to the parameter count
    std::vector<double> values;  // the per-scalar metric, indexed by flat index
};

namespace detail {

inline int64_t bin_of(const std::vector<double>& edges, double v) {
    const auto bins = static_cast<int64_t>(edges.size()) - 1;
    const double lo = edges.front(), hi = edges.back();
    const double width = (hi - lo) / static_cast<double>(bins);
    auto bin = static_cast<int64_t>(std::floor((v - lo) / width));
    return std::clamp<int64_t>(bin, 0, bins - 1);  // top edge inclusive
}

inline Histogram bin_values(HistMetric metric, std::vector<double> values, int64_t bins,
                            bool symmetric) {
    if (bins < 2) throw SpecError("histogram: need at least 2 bins");
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, std::abs(v));
    if (mx == 0.0) mx = 1e-12;  // keep edges strictly increasing

    Histogram hist;
    hist.metric = metric;
    const double lo = symmetric ? -mx : 0.0;
    const double hi = mx;
    hist.edges.resize(static_cast<size_t>(bins) + 1);
    for (int64_t b = 0; b <= bins; ++b)
        hist.edges[static_cast<size_t>(b)] =
            lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    hist.counts.assign(static_cast<size_t>(bins), 0);
    for (double v : values) ++hist.counts[static_cast<size_t>(bin_of(hist.edges, v))];
    hist.values = std::move(values);
    return hist;
}

}  // namespace detail

// Signed end-to-start deviation of every scalar, binned symmetrically.
inline Histogram deviation_histogram(const history::SnapshotStore& store,
                                     const HistogramSpec& spec = {}) {
    if (store.size() < 2) throw RangeError("deviation_histogram: need first and last snapshots");
    const std::vector<float>& first = store.lookup_exact(0);
    const std::vector<float>& last = store.lookup_exact(store.steps().back());
    std::vector<double> d(first.size());
    for (size_t i = 0; i < first.size(); ++i)
        d[i] = static_cast<double>(last[i]) - static_cast<double>(first[i]);
    return detail::bin_values(HistMetric::final_minus_initial, std::move(d), spec.bins, true);
}

// Oscillation metric: RMS deviation from the initial value over the recorded
// steps after 0 (step 0 itself contributes a structural zero and is skipped).
inline Histogram second_moment_histogram(const history::SnapshotStore& store,
                                         const HistogramSpec& spec = {}) {
    if (store.size() < 2) throw RangeError("second_moment_histogram: need >= 2 snapshots");
    const std::vector<float>& w0 = store.lookup_exact(0);
    std::vector<double> sums(w0.size(), 0.0);
    int64_t k = 0;
    for (int64_t step : store.steps()) {
        if (step == 0) continue;
        const std::vector<float>& w = store.lookup_exact(step);
        for (size_t i = 0; i < w.size(); ++i) {
            const double dev = static_cast<double>(w[i]) - static_cast<double>(w0[i]);
            sums[i] += dev * dev;
        }
        ++k;
    }
    for (double& s : sums) s = std::sqrt(s / static_cast<double>(k));
    return detail::bin_values(HistMetric::sqrt_second_moment, std::move(sums), spec.bins, false);
}

// p ∈ [0,100]; linear interpolation between order statistics.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw EmptyDataset("percentile: no values");
    std::sort(values.begin(), values.end());
    const double rank = (p / 100.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - std::floor(rank);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

struct SampledTrajectory {
    int64_t bin = 0;
    history::WeightSeries series;  // values are deviations from w(0)
};

// Up to per_bin scalars drawn from every non-empty bin of `hist`, returned as
// deviation-from-initialization series. Deterministic in (seed, bin).
inline std::vector<SampledTrajectory> sample_trajectories(const history::SnapshotStore& store,
                                                          const Histogram& hist, int64_t per_bin,
                                                          uint64_t seed) {
    std::vector<SampledTrajectory> out;
    if (per_bin <= 0) return out;
    if (static_cast<int64_t>(hist.values.size()) != store.param_count())
        throw ShapeError("sample_trajectories: histogram does not match store");

    const auto bins = static_cast<int64_t>(hist.counts.size());
    std::vector<std::vector<int64_t>> members(static_cast<size_t>(bins));
    for (size_t i = 0; i < hist.values.size(); ++i)
        members[static_cast<size_t>(detail::bin_of(hist.edges, hist.values[i]))].push_back(
            static_cast<int64_t>(i));

    for (int64_t b = 0; b < bins; ++b) {
        auto& m = members[static_cast<size_t>(b)];
        if (m.empty()) continue;
        rng::Stream s(rng::derive_key({seed, 0x7472616aull /* "traj" */,
                                       static_cast<uint64_t>(b)}));
        rng::shuffle(m, s);
        const auto take = std::min<size_t>(m.size(), static_cast<size_t>(per_bin));
        for (size_t j = 0; j < take; ++j) {
            SampledTrajectory traj;
            traj.bin = b;
            traj.series = store.weight_series(m[j]);
            const float base = traj.series.values.empty() ? 0.0f : traj.series.values.front();
            for (float& v : traj.series.values) v -= base;
            out.push_back(std::move(traj));
        }
    }
    return out;
}

}  // namespace introspect::analysis
