#pragma once

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "introspect/nn/spec.hpp"
#include "introspect/rng.hpp"

namespace introspect::nn {

// Flat trainable parameter vector. Element order and meaning come from the
// NetworkPlan the vector was initialized for.
struct Params {
    std::vector<float> data;
};

struct NormalInit {
    double mean = 0.0;
    double stddev = 1.0;
};

// Resamples outside mean +/- clip*stddev.
struct TruncatedNormalInit {
    double mean = 0.0;
    double stddev = 1.0;
    double clip = 2.0;
};

// Glorot uniform on weights (bounds from layer fan-in/fan-out), zero biases.
struct XavierInit {};

struct ConstantInit {
    double value = 0.0;
};

using InitRule = std::variant<NormalInit, TruncatedNormalInit, XavierInit, ConstantInit>;

namespace detail {

inline std::pair<double, double> fans(const LayerPlan& lp) {
    if (const auto* d = std::get_if<DenseLayer>(&lp.desc))
        return {static_cast<double>(d->in), static_cast<double>(d->out)};
    const auto& c = std::get<Conv2dLayer>(lp.desc);
    const double window = static_cast<double>(c.kh * c.kw);
    return {window * static_cast<double>(c.cin), window * static_cast<double>(c.cout)};
}

}  // namespace detail

// Every scalar is drawn from its own counter-keyed stream, so the result
// depends only on (plan, rule, seed), never on fill order.
inline Params init_params(const NetworkPlan& plan, const InitRule& rule, uint64_t seed) {
    Params params;
    params.data.resize(static_cast<size_t>(plan.param_count()));

    auto scalar_stream = [&](int64_t flat) {
        return rng::Stream(rng::derive_key({seed, 0x696e6974ull /* "init" */,
                                            static_cast<uint64_t>(flat)}));
    };

    if (const auto* c = std::get_if<ConstantInit>(&rule)) {
        const float v = static_cast<float>(c->value);
        for (float& w : params.data) w = v;
        return params;
    }
    if (const auto* n = std::get_if<NormalInit>(&rule)) {
        for (int64_t i = 0; i < plan.param_count(); ++i) {
            auto s = scalar_stream(i);
            params.data[static_cast<size_t>(i)] = static_cast<float>(s.normal(n->mean, n->stddev));
        }
        return params;
    }
    if (const auto* t = std::get_if<TruncatedNormalInit>(&rule)) {
        for (int64_t i = 0; i < plan.param_count(); ++i) {
            auto s = scalar_stream(i);
            params.data[static_cast<size_t>(i)] =
                static_cast<float>(s.truncated_normal(t->mean, t->stddev, t->clip));
        }
        return params;
    }

    // Xavier: per-layer uniform bound sqrt(6 / (fan_in + fan_out)).
    for (const LayerPlan& lp : plan.layers()) {
        if (lp.weight_count == 0) continue;
        auto [fan_in, fan_out] = detail::fans(lp);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (int64_t i = 0; i < lp.weight_count; ++i) {
            auto s = scalar_stream(lp.weight_offset + i);
            params.data[static_cast<size_t>(lp.weight_offset + i)] =
                static_cast<float>(s.uniform(-bound, bound));
        }
        for (int64_t i = 0; i < lp.bias_count; ++i)
            params.data[static_cast<size_t>(lp.bias_offset + i)] = 0.0f;
    }
    return params;
}

}  // namespace introspect::nn
