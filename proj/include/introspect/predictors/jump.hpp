#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/history/store.hpp"
#include "introspect/intro/model.hpp"
#include "introspect/nn/spec.hpp"
#include "introspect/predictors/curve_fit.hpp"
#include "introspect/rng.hpp"

namespace introspect::predictors {

// value + ε with ε ~ N(0, σ²), keyed by (seed, flat_index, jump step) so the
// draw is a pure function of its coordinates. σ=0 returns the value bit-for
// -bit unchanged (no `+ 0.0`, which would flip −0.0).
inline double noise_perturb(double value, double sigma, uint64_t seed, int64_t flat_index,
                            int64_t step) {
    if (sigma < 0.0) throw SpecError("noise_perturb: sigma must be >= 0");
    if (sigma == 0.0) return value;
    rng::Stream s(rng::derive_key({seed, 0x6e6f6973ull /* "nois" */,
                                   static_cast<uint64_t>(flat_index),
                                   static_cast<uint64_t>(step)}));
    return value + sigma * s.normal();
}

// The forecasting strategies a jump can use. Curve-fit ratios aim at r·t;
// the introspection model's horizon (k·t) is baked into its training data.
struct IntrospectionPredictor {
    intro::IntrospectionModel model;
};
struct QuadraticFitPredictor {
    double r = 1.25;
};
struct LinearFitPredictor {
    double r = 1.1;
};
struct GaussianNoisePredictor {
    double sigma = 0.0;
    uint64_t seed = 0;
};

using Predictor = std::variant<IntrospectionPredictor, QuadraticFitPredictor, LinearFitPredictor,
                               GaussianNoisePredictor>;

inline std::string predictor_name(const Predictor& p) {
    if (std::holds_alternative<IntrospectionPredictor>(p)) {
        const auto& m = std::get<IntrospectionPredictor>(p).model;
        return m.activation == intro::IntrospectionModel::Activation::relu
                   ? "introspection"
                   : "linear-introspection";
    }
    if (std::holds_alternative<QuadraticFitPredictor>(p)) return "quadratic-fit";
    if (std::holds_alternative<LinearFitPredictor>(p)) return "linear-fit";
    return "gaussian-noise";
}

struct JumpOptions {
    bool include_biases = true;  // paper default: every trainable scalar jumps
    // Forecast magnitude cap; <= 0 means "10× the largest |w| in the history".
    double clamp_cap = 0.0;
};

struct JumpReport {
    int64_t step = 0;
    int64_t forecasted = 0;       // scalars overwritten
    int64_t skipped_biases = 0;   // left in place by include_biases=false
    int64_t clamped = 0;          // forecasts pulled back to ±cap
    double cap = 0.0;
    double max_abs_forecast = 0.0;
};

// Overwrites every trainable scalar of `params` (the live step-t vector) with
// its forecast from the four-tap history {0, ⌊0.4t⌋, ⌊0.7t⌋, t}. Each scalar
// is computed independently from its own history — there is no cross-weight
// coupling, so any application order gives identical results. The live vector
// is recorded into the store as the step-t snapshot before predicting.
inline JumpReport apply_jump(std::vector<float>& params, history::SnapshotStore& store, int64_t t,
                             const Predictor& predictor, const nn::NetworkPlan& plan,
                             const JumpOptions& opt = {}) {
    if (static_cast<int64_t>(params.size()) != store.param_count())
        throw ShapeError("apply_jump: params length does not match store");
    if (plan.param_count() != store.param_count())
        throw ShapeError("apply_jump: network plan does not match store");
    if (t <= 0) throw RangeError("apply_jump: jump step must be > 0");

    if (!store.has(t)) store.record(t, params);
    const std::vector<float>& w0 = store.lookup_exact(0);
    const std::vector<float>& w4 = store.lookup_exact(t * 4 / 10);
    const std::vector<float>& w7 = store.lookup_exact(t * 7 / 10);
    const std::vector<float>& wt = store.lookup_exact(t);

    const auto count = static_cast<int64_t>(params.size());
    JumpReport report;
    report.step = t;
    report.cap = opt.clamp_cap > 0.0 ? opt.clamp_cap : 10.0 * store.max_abs_weight();

    std::vector<double> forecasts(static_cast<size_t>(count));
    if (const auto* ip = std::get_if<IntrospectionPredictor>(&predictor)) {
        std::vector<std::array<double, 4>> history(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) {
            const auto idx = static_cast<size_t>(i);
            history[idx] = {static_cast<double>(wt[idx]), static_cast<double>(w7[idx]),
                            static_cast<double>(w4[idx]), static_cast<double>(w0[idx])};
        }
        forecasts = intro::forecast_raw(ip->model, history);
    } else if (const auto* qp = std::get_if<QuadraticFitPredictor>(&predictor)) {
        const double target = qp->r * static_cast<double>(t);
        for (int64_t i = 0; i < count; ++i) {
            const auto idx = static_cast<size_t>(i);
            const History4 pts{HistoryPoint{0.0, w0[idx]},
                               {static_cast<double>(t * 4 / 10), w4[idx]},
                               {static_cast<double>(t * 7 / 10), w7[idx]},
                               {static_cast<double>(t), wt[idx]}};
            forecasts[idx] = quadratic_fit_predict(pts, target);
        }
    } else if (const auto* lp = std::get_if<LinearFitPredictor>(&predictor)) {
        const double target = lp->r * static_cast<double>(t);
        for (int64_t i = 0; i < count; ++i) {
            const auto idx = static_cast<size_t>(i);
            const History4 pts{HistoryPoint{0.0, w0[idx]},
                               {static_cast<double>(t * 4 / 10), w4[idx]},
                               {static_cast<double>(t * 7 / 10), w7[idx]},
                               {static_cast<double>(t), wt[idx]}};
            forecasts[idx] = linear_fit_predict(pts, target);
        }
    } else {
        const auto& np = std::get<GaussianNoisePredictor>(predictor);
        for (int64_t i = 0; i < count; ++i)
            forecasts[static_cast<size_t>(i)] =
                noise_perturb(wt[static_cast<size_t>(i)], np.sigma, np.seed, i, t);
    }

    const std::vector<bool> bias = plan.bias_mask();
    for (int64_t i = 0; i < count; ++i) {
        const auto idx = static_cast<size_t>(i);
        if (!opt.include_biases && bias[idx]) {
            ++report.skipped_biases;
            continue;
        }
        double f = forecasts[idx];
        if (!std::isfinite(f))
            throw NumericError("apply_jump: non-finite forecast at flat index " +
                               std::to_string(i));
        report.max_abs_forecast = std::max(report.max_abs_forecast, std::abs(f));
        if (std::abs(f) > report.cap) {
            f = f > 0.0 ? report.cap : -report.cap;
            ++report.clamped;
        }
        params[idx] = static_cast<float>(f);
        ++report.forecasted;
    }
    return report;
}

}  // namespace introspect::predictors
