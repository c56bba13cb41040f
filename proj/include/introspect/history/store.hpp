#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/hash.hpp"

namespace introspect::history {

static_assert(std::endian::native == std::endian::little,
              "WHST files are little-endian; big-endian hosts are unsupported");

// Closed interval of candidate sample steps for introspection-dataset builds.
struct BuildRange {
    int64_t t_min = 0;
    int64_t t_max = 0;
};

// Every step the training loop must snapshot: stride multiples (analysis),
// run start/end, the jump closures {0, 0.4t, 0.7t, t}, and for dataset builds
// the closures {0.4t, 0.7t, t, k*t} of every stride-multiple candidate t.
inline std::vector<int64_t> required_steps(int64_t run_length, int64_t stride,
                                           const std::vector<int64_t>& jump_steps,
                                           std::optional<BuildRange> build = std::nullopt,
                                           double k = 2.0) {
    if (run_length < 0) throw RangeError("required_steps: negative run length");
    if (stride <= 0) throw SpecError("required_steps: stride must be > 0");
    std::set<int64_t> steps;
    steps.insert(0);
    steps.insert(run_length);
    for (int64_t s = 0; s <= run_length; s += stride) steps.insert(s);

    for (int64_t t : jump_steps) {
        if (t < 0 || t > run_length)
            throw RangeError("required_steps: jump step " + std::to_string(t) +
                             " outside run length " + std::to_string(run_length));
        steps.insert(t * 4 / 10);
        steps.insert(t * 7 / 10);
        steps.insert(t);
    }

    if (build) {
        if (build->t_min < 0 || build->t_max > run_length || build->t_min > build->t_max)
            throw RangeError("required_steps: build range outside run length");
        if (!(k > 1.0)) throw SpecError("required_steps: k must be > 1");
        for (int64_t t = 0; t <= run_length; t += stride) {
            if (t < build->t_min || t > build->t_max) continue;
            const auto target = static_cast<int64_t>(std::floor(k * static_cast<double>(t) + 1e-9));
            if (target > run_length) continue;  // cannot label this t; builder skips it too
            steps.insert(t * 4 / 10);
            steps.insert(t * 7 / 10);
            steps.insert(t);
            steps.insert(target);
        }
    }
    return {steps.begin(), steps.end()};
}

struct WeightSeries {
    int64_t flat_index = 0;
    std::vector<int64_t> steps;
    std::vector<float> values;
};

struct StoreMeta {
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
    std::string optimizer;
    int64_t stride = 1;
};

// Full parameter vectors keyed by training step, plus the run metadata needed
// to interpret them. Vectors are f32 (training precision) and immutable once
// recorded.
class SnapshotStore {
  public:
    SnapshotStore() = default;
    SnapshotStore(int64_t param_count, StoreMeta meta, std::vector<int64_t> required = {})
        : param_count_(param_count), meta_(std::move(meta)), required_(std::move(required)) {
        if (param_count_ <= 0) throw SpecError("snapshot store: param_count must be > 0");
    }

    int64_t param_count() const { return param_count_; }
    const StoreMeta& meta() const { return meta_; }
    const std::vector<int64_t>& required() const { return required_; }
    size_t size() const { return snapshots_.size(); }
    bool has(int64_t step) const { return snapshots_.count(step) != 0; }
    float max_abs_weight() const { return max_abs_; }

    std::vector<int64_t> steps() const {
        std::vector<int64_t> out;
        out.reserve(snapshots_.size());
        for (const auto& [step, _] : snapshots_) out.push_back(step);
        return out;
    }

    void record(int64_t step, const std::vector<float>& params) {
        if (step < 0) throw RangeError("snapshot store: negative step");
        if (static_cast<int64_t>(params.size()) != param_count_)
            throw ShapeError("snapshot store: params length " + std::to_string(params.size()) +
                             " != " + std::to_string(param_count_));
        if (snapshots_.count(step))
            throw DuplicateStep("snapshot store: step " + std::to_string(step) +
                                " already recorded");
        for (float v : params) max_abs_ = std::max(max_abs_, std::abs(v));
        snapshots_.emplace(step, params);
    }

    const std::vector<float>& lookup_exact(int64_t step) const {
        auto it = snapshots_.find(step);
        if (it == snapshots_.end())
            throw MissingSnapshot("snapshot store: no snapshot at step " + std::to_string(step));
        return it->second;
    }

    // Closest recorded step; equidistant candidates resolve to the earlier one.
    std::pair<int64_t, const std::vector<float>*> lookup_nearest(int64_t step) const {
        if (snapshots_.empty()) throw StateError("snapshot store: empty");
        auto hi = snapshots_.lower_bound(step);
        if (hi == snapshots_.end()) {
            auto last = std::prev(hi);
            return {last->first, &last->second};
        }
        if (hi == snapshots_.begin() || hi->first == step) return {hi->first, &hi->second};
        auto lo = std::prev(hi);
        const int64_t d_lo = step - lo->first;
        const int64_t d_hi = hi->first - step;
        if (d_lo <= d_hi) return {lo->first, &lo->second};
        return {hi->first, &hi->second};
    }

    WeightSeries weight_series(int64_t flat_index) const {
        if (flat_index < 0 || flat_index >= param_count_)
            throw IndexError("weight_series: flat index " + std::to_string(flat_index) +
                             " outside [0, " + std::to_string(param_count_) + ")");
        WeightSeries series;
        series.flat_index = flat_index;
        series.steps.reserve(snapshots_.size());
        series.values.reserve(snapshots_.size());
        for (const auto& [step, params] : snapshots_) {
            series.steps.push_back(step);
            series.values.push_back(params[static_cast<size_t>(flat_index)]);
        }
        return series;
    }

    // Bytes this store will occupy once all `step_count` snapshots exist.
    static uint64_t estimated_bytes(uint64_t step_count, uint64_t param_count) {
        return step_count * (param_count * sizeof(float) + 16);
    }

    static void validate_memory(uint64_t step_count, uint64_t param_count,
                                uint64_t limit_bytes = uint64_t{1} << 30) {
        const uint64_t need = estimated_bytes(step_count, param_count);
        if (need > limit_bytes)
            throw SpecError("snapshot store would need " + std::to_string(need) +
                            " bytes, over the " + std::to_string(limit_bytes) + " byte limit; "
                            "raise the stride or shrink the network");
    }

    void save(const std::filesystem::path& path) const;
    static SnapshotStore load(const std::filesystem::path& path);

    bool operator==(const SnapshotStore& other) const {
        return param_count_ == other.param_count_ && meta_.spec_hash == other.meta_.spec_hash &&
               meta_.seed == other.meta_.seed && meta_.optimizer == other.meta_.optimizer &&
               meta_.stride == other.meta_.stride && required_ == other.required_ &&
               snapshots_ == other.snapshots_;
    }

  private:
    int64_t param_count_ = 0;
    StoreMeta meta_;
    std::vector<int64_t> required_;
    std::map<int64_t, std::vector<float>> snapshots_;
    float max_abs_ = 0.0f;
};

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(std::string("whst: truncated while reading ") + what);
    return v;
}

inline constexpr char kWhstMagic[4] = {'W', 'H', 'S', 'T'};
inline constexpr uint16_t kWhstVersion = 1;

}  // namespace detail

inline void SnapshotStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(detail::kWhstMagic, 4);
    detail::write_pod(out, detail::kWhstVersion);
    detail::write_pod(out, meta_.spec_hash);
    detail::write_pod(out, meta_.seed);
    detail::write_pod(out, static_cast<uint32_t>(meta_.optimizer.size()));
    out.write(meta_.optimizer.data(), static_cast<std::streamsize>(meta_.optimizer.size()));
    detail::write_pod(out, meta_.stride);
    detail::write_pod(out, static_cast<uint64_t>(param_count_));
    detail::write_pod(out, static_cast<uint64_t>(snapshots_.size()));
    detail::write_pod(out, static_cast<uint64_t>(required_.size()));
    for (int64_t s : required_) detail::write_pod(out, s);
    for (const auto& [step, params] : snapshots_) {
        detail::write_pod(out, static_cast<uint64_t>(step));
        const auto* bytes = reinterpret_cast<const char*>(params.data());
        const size_t nbytes = params.size() * sizeof(float);
        detail::write_pod(out, crc32(bytes, nbytes));
        out.write(bytes, static_cast<std::streamsize>(nbytes));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

inline SnapshotStore SnapshotStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, detail::kWhstMagic, 4) != 0)
        throw FormatError("whst: bad magic in " + path.string());
    const auto version = detail::read_pod<uint16_t>(in, "version");
    if (version != detail::kWhstVersion)
        throw FormatError("whst: unsupported version " + std::to_string(version));

    StoreMeta meta;
    meta.spec_hash = detail::read_pod<uint64_t>(in, "spec hash");
    meta.seed = detail::read_pod<uint64_t>(in, "seed");
    const auto opt_len = detail::read_pod<uint32_t>(in, "optimizer length");
    meta.optimizer.resize(opt_len);
    if (opt_len && !in.read(meta.optimizer.data(), opt_len))
        throw FormatError("whst: truncated optimizer string");
    meta.stride = detail::read_pod<int64_t>(in, "stride");
    const auto param_count = detail::read_pod<uint64_t>(in, "param count");
    const auto step_count = detail::read_pod<uint64_t>(in, "step count");
    const auto required_count = detail::read_pod<uint64_t>(in, "required count");
    if (param_count == 0) throw FormatError("whst: zero param count");

    std::vector<int64_t> required(required_count);
    for (auto& s : required) s = detail::read_pod<int64_t>(in, "required step");

    SnapshotStore store(static_cast<int64_t>(param_count), std::move(meta), std::move(required));
    std::vector<float> payload(param_count);
    for (uint64_t i = 0; i < step_count; ++i) {
        const auto step = detail::read_pod<uint64_t>(in, "record step");
        const auto expect = detail::read_pod<uint32_t>(in, "record checksum");
        auto* bytes = reinterpret_cast<char*>(payload.data());
        const size_t nbytes = payload.size() * sizeof(float);
        if (!in.read(bytes, static_cast<std::streamsize>(nbytes)))
            throw FormatError("whst: truncated payload at record " + std::to_string(i));
        if (crc32(bytes, nbytes) != expect)
            throw FormatError("whst: checksum mismatch at step " + std::to_string(step));
        store.record(static_cast<int64_t>(step), payload);
    }
    return store;
}

// The `history export --index i` payload: one CSV row per recorded step.
inline void export_weight_csv(const SnapshotStore& store, int64_t flat_index, std::ostream& out) {
    const WeightSeries series = store.weight_series(flat_index);
    out << "step,value\n";
    for (size_t i = 0; i < series.steps.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%lld,%.9g\n",
                      static_cast<long long>(series.steps[i]),
                      static_cast<double>(series.values[i]));
        out << buf;
    }
}

}  // namespace introspect::history
