#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/hash.hpp"
#include "introspect/intro/dataset.hpp"
#include "introspect/nn/init.hpp"
#include "introspect/nn/network.hpp"
#include "introspect/nn/spec.hpp"
#include "introspect/optim/optimizer.hpp"
#include "introspect/optim/schedule.hpp"
#include "introspect/rng.hpp"

namespace introspect::intro {

// The forecaster: a fixed 4→40→1 MLP operating in ×1000 scaled space. The
// identity variant (no hidden nonlinearity) is the paper-style linear
// ablation of the same shape.
struct IntrospectionModel {
    enum class Activation : uint8_t { relu = 0, identity = 1 };

    static constexpr int64_t kInputs = 4;
    static constexpr int64_t kHidden = 40;
    static constexpr double kScale = 1000.0;

    Activation activation = Activation::relu;
    std::vector<float> params;  // flat layout of plan(): dense 4→40, dense 40→1

    nn::NetworkPlan plan() const {
        nn::NetworkSpec spec;
        spec.input_shape = {1, 1, kInputs};
        spec.layers.push_back(nn::DenseLayer{kInputs, kHidden});
        if (activation == Activation::relu) spec.layers.push_back(nn::ReluLayer{});
        spec.layers.push_back(nn::DenseLayer{kHidden, 1});
        return nn::NetworkPlan::compile(spec);
    }

    bool operator==(const IntrospectionModel&) const = default;
};

inline IntrospectionModel make_model(IntrospectionModel::Activation activation,
                                     uint64_t init_seed) {
    IntrospectionModel model;
    model.activation = activation;
    const nn::NetworkPlan plan = model.plan();
    model.params = nn::init_params(plan, nn::XavierInit{}, init_seed).data;
    return model;
}

// Batched forecast in raw (unscaled) units. Rows of `history4` are
// [w(t), w(0.7t), w(0.4t), w(0)]; output row i is the forecast for row i.
// Runs the MLP in double so the ×1000 / ÷1000 round trip is exact for any
// f32-representable input (the product fits a double mantissa).
inline std::vector<double> forecast_raw(const IntrospectionModel& model,
                                        const std::vector<std::array<double, 4>>& history4) {
    if (history4.empty()) return {};
    for (size_t i = 0; i < history4.size(); ++i)
        for (double v : history4[i])
            if (!std::isfinite(v))
                throw NumericError("forecast: non-finite history input at row " +
                                   std::to_string(i));
    const nn::NetworkPlan plan = model.plan();
    if (static_cast<int64_t>(model.params.size()) != plan.param_count())
        throw ShapeError("forecast: model params have wrong length");

    const auto n = static_cast<int64_t>(history4.size());
    std::vector<double> inputs(static_cast<size_t>(n) * 4);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < 4; ++j)
            inputs[static_cast<size_t>(i * 4 + j)] =
                history4[static_cast<size_t>(i)][static_cast<size_t>(j)] *
                IntrospectionModel::kScale;

    std::vector<double> params64(model.params.begin(), model.params.end());
    const auto state = nn::forward<double>(plan, params64, inputs, n, nn::Mode::eval);
    const std::vector<double>& out = nn::logits(state);
    std::vector<double> forecasts(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        forecasts[static_cast<size_t>(i)] =
            out[static_cast<size_t>(i)] / IntrospectionModel::kScale;
    return forecasts;
}

// Single-weight convenience; pure function of (model, history4).
inline double predict_weight(const IntrospectionModel& model,
                             const std::array<double, 4>& history4) {
    return forecast_raw(model, {history4})[0];
}

// Mean |y − MLP(x)| over samples, in scaled space.
inline double evaluate_l1(const IntrospectionModel& model,
                          const std::vector<WeightSample>& samples) {
    if (samples.empty()) throw EmptyDataset("evaluate_l1: no samples");
    const nn::NetworkPlan plan = model.plan();
    const std::span<const float> params(model.params);
    double total = 0.0;
    constexpr size_t kChunk = 4096;
    std::vector<float> inputs;
    for (size_t start = 0; start < samples.size(); start += kChunk) {
        const size_t n = std::min(kChunk, samples.size() - start);
        inputs.assign(n * 4, 0.0f);
        for (size_t i = 0; i < n; ++i)
            std::copy(samples[start + i].x.begin(), samples[start + i].x.end(),
                      inputs.begin() + static_cast<int64_t>(i) * 4);
        const auto state = nn::forward<float>(plan, params, inputs, static_cast<int64_t>(n),
                                              nn::Mode::eval);
        const std::vector<float>& pred = nn::logits(state);
        for (size_t i = 0; i < n; ++i)
            total += std::abs(static_cast<double>(pred[i]) -
                              static_cast<double>(samples[start + i].y));
    }
    return total / static_cast<double>(samples.size());
}

struct IntroProtocol {
    IntrospectionModel::Activation activation = IntrospectionModel::Activation::relu;
    optim::LrSchedule schedule = optim::LrSchedule::step_decay(5e-4, 8000, 0.5);
    int64_t batch = 20;
    int64_t steps = 30000;
    int64_t eval_every = 1000;
    uint64_t seed = 0;
};

struct IntroCurvePoint {
    int64_t step = 0;       // steps completed when the window closed
    double train_l1 = 0.0;  // mean batch L1 over the window
    double val_l1 = 0.0;    // held-out L1 at that point (NaN if no val split)
};

struct IntroTrainResult {
    IntrospectionModel model;
    double final_train_l1 = 0.0;
    double final_val_l1 = 0.0;
    std::vector<IntroCurvePoint> curve;
};

// Adam + L1 training of the forecaster on scaled samples. Deterministic for
// a fixed protocol seed: init, shuffles, and arithmetic are all seeded and
// single-threaded.
inline IntroTrainResult train_introspection(const std::vector<WeightSample>& train,
                                            const std::vector<WeightSample>& val,
                                            const IntroProtocol& proto) {
    if (train.empty()) throw EmptyDataset("train_introspection: no training samples");
    if (proto.batch < 1) throw SpecError("train_introspection: batch must be >= 1");
    if (proto.steps < 0) throw SpecError("train_introspection: steps must be >= 0");

    IntroTrainResult result;
    result.model = make_model(proto.activation, rng::derive_key({proto.seed, 0x696d6f64ull}));
    const nn::NetworkPlan plan = result.model.plan();
    std::vector<float>& params = result.model.params;
    auto opt = optim::OptimizerState<float>::adam();

    std::vector<int64_t> order(train.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    uint64_t epoch = 0;
    size_t cursor = order.size();  // forces a shuffle on first use

    std::vector<float> inputs;
    std::vector<float> dlogits;
    double window_loss = 0.0;
    int64_t window_batches = 0;

    for (int64_t step = 0; step < proto.steps; ++step) {
        if (cursor >= order.size()) {
            rng::Stream s(rng::derive_key({proto.seed, 0x69736866ull /* "ishf" */, epoch++}));
            rng::shuffle(order, s);
            cursor = 0;
        }
        const size_t n = std::min(static_cast<size_t>(proto.batch), order.size() - cursor);
        inputs.assign(n * 4, 0.0f);
        for (size_t i = 0; i < n; ++i) {
            const WeightSample& sample = train[static_cast<size_t>(order[cursor + i])];
            std::copy(sample.x.begin(), sample.x.end(), inputs.begin() + static_cast<int64_t>(i) * 4);
        }

        const auto state = nn::forward<float>(plan, std::span<const float>(params), inputs,
                                              static_cast<int64_t>(n), nn::Mode::train);
        const std::vector<float>& pred = nn::logits(state);
        dlogits.assign(n, 0.0f);
        double batch_loss = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const float err = pred[i] - train[static_cast<size_t>(order[cursor + i])].y;
            batch_loss += std::abs(static_cast<double>(err));
            dlogits[i] = (err > 0.0f ? 1.0f : (err < 0.0f ? -1.0f : 0.0f)) /
                         static_cast<float>(n);
        }
        batch_loss /= static_cast<double>(n);
        cursor += n;

        const std::vector<float> grad = nn::backward_from_dlogits<float>(
            plan, std::span<const float>(params), dlogits, state);
        optim::adam_step<float>(params, grad, optim::lr_at(proto.schedule, step), opt);

        window_loss += batch_loss;
        ++window_batches;
        if (proto.eval_every > 0 &&
            ((step + 1) % proto.eval_every == 0 || step + 1 == proto.steps)) {
            IntroCurvePoint point;
            point.step = step + 1;
            point.train_l1 = window_loss / static_cast<double>(window_batches);
            point.val_l1 = val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : evaluate_l1(result.model, val);
            result.curve.push_back(point);
            window_loss = 0.0;
            window_batches = 0;
        }
    }

    result.final_train_l1 = evaluate_l1(result.model, train);
    result.final_val_l1 =
        val.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate_l1(result.model, val);
    return result;
}

// Model file: "INTR", version u16, activation u8, param count u64, f32
// params, crc32 of the param bytes. Little-endian throughout.
namespace detail {
inline constexpr char kIntrMagic[4] = {'I', 'N', 'T', 'R'};
inline constexpr uint16_t kIntrVersion = 1;
}  // namespace detail

inline void save_model(const IntrospectionModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(detail::kIntrMagic, 4);
    const uint16_t version = detail::kIntrVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const auto activation = static_cast<uint8_t>(model.activation);
    out.write(reinterpret_cast<const char*>(&activation), sizeof(activation));
    const auto count = static_cast<uint64_t>(model.params.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    const auto* bytes = reinterpret_cast<const char*>(model.params.data());
    const size_t nbytes = model.params.size() * sizeof(float);
    out.write(bytes, static_cast<std::streamsize>(nbytes));
    const uint32_t checksum = crc32(bytes, nbytes);
    out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
    if (!out) throw IoError("write failed for " + path.string());
}

inline IntrospectionModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, detail::kIntrMagic, 4) != 0)
        throw FormatError("model file: bad magic in " + path.string());
    uint16_t version = 0;
    if (!in.read(reinterpret_cast<char*>(&version), sizeof(version)) ||
        version != detail::kIntrVersion)
        throw FormatError("model file: unsupported version");
    uint8_t activation = 0;
    if (!in.read(reinterpret_cast<char*>(&activation), sizeof(activation)) || activation > 1)
        throw FormatError("model file: bad activation tag");
    uint64_t count = 0;
    if (!in.read(reinterpret_cast<char*>(&count), sizeof(count)))
        throw FormatError("model file: truncated header");
    IntrospectionModel model;
    model.activation = static_cast<IntrospectionModel::Activation>(activation);
    model.params.resize(count);
    auto* bytes = reinterpret_cast<char*>(model.params.data());
    const size_t nbytes = model.params.size() * sizeof(float);
    if (!in.read(bytes, static_cast<std::streamsize>(nbytes)))
        throw FormatError("model file: truncated params in " + path.string());
    uint32_t expect = 0;
    if (!in.read(reinterpret_cast<char*>(&expect), sizeof(expect)))
        throw FormatError("model file: missing checksum");
    if (crc32(bytes, nbytes) != expect)
        throw FormatError("model file: checksum mismatch in " + path.string());
    if (static_cast<int64_t>(model.params.size()) != model.plan().param_count())
        throw FormatError("model file: param count does not match the 4-40-1 shape");
    return model;
}

}  // namespace introspect::intro
