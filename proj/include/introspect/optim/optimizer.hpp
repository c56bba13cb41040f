#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "introspect/errors.hpp"

namespace introspect::optim {

enum class OptKind { sgd, momentum, adam };

inline std::string to_string(OptKind k) {
    switch (k) {
        case OptKind::sgd: return "sgd";
        case OptKind::momentum: return "momentum";
        case OptKind::adam: return "adam";
    }
    return "?";
}

// Elementwise first-order optimizers. Auxiliary vectors share the flat Params
// layout; the step counter advances exactly once per *_step call.
template <class T>
struct OptimizerState {
    OptKind kind = OptKind::sgd;
    double mu = 0.0;      // momentum coefficient
    double beta1 = 0.9;   // adam
    double beta2 = 0.999; // adam
    double eps = 1e-8;    // adam
    int64_t t = 0;        // completed steps
    std::vector<T> velocity;  // momentum
    std::vector<T> m;         // adam first moment
    std::vector<T> v;         // adam second moment

    static OptimizerState plain_sgd() { return OptimizerState{}; }
    static OptimizerState with_momentum(double mu) {
        if (!(mu >= 0.0 && mu < 1.0)) throw SpecError("momentum mu must lie in [0, 1)");
        OptimizerState s;
        s.kind = OptKind::momentum;
        s.mu = mu;
        return s;
    }
    static OptimizerState adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        OptimizerState s;
        s.kind = OptKind::adam;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        return s;
    }
};

namespace detail {
template <class T>
void require_same_size(std::span<T> params, std::span<const T> grad) {
    if (params.size() != grad.size())
        throw ShapeError("optimizer: params/grad size mismatch (" +
                         std::to_string(params.size()) + " vs " + std::to_string(grad.size()) +
                         ")");
}
}  // namespace detail

// w ← w − lr·g, or with momentum: v ← μv + g, w ← w − lr·v.
template <class T>
void sgd_step(std::span<T> params, std::span<const T> grad, double lr,
              OptimizerState<T>& state) {
    detail::require_same_size(params, grad);
    if (state.kind == OptKind::momentum && state.mu > 0.0) {
        if (state.velocity.empty()) state.velocity.assign(params.size(), T(0));
        if (state.velocity.size() != params.size())
            throw ShapeError("optimizer: velocity/params size mismatch");
        const T mu = static_cast<T>(state.mu);
        const T step = static_cast<T>(lr);
        for (size_t i = 0; i < params.size(); ++i) {
            state.velocity[i] = mu * state.velocity[i] + grad[i];
            params[i] -= step * state.velocity[i];
        }
    } else {
        const T step = static_cast<T>(lr);
        for (size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
    }
    ++state.t;
}

// Standard bias-corrected Adam (Kingma & Ba): m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ),
// w ← w − lr·m̂/(√v̂ + ε).
template <class T>
void adam_step(std::span<T> params, std::span<const T> grad, double lr,
               OptimizerState<T>& state) {
    detail::require_same_size(params, grad);
    if (state.m.empty()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("optimizer: moment/params size mismatch");
    ++state.t;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.eps));
    }
}

// Dispatches on state.kind so training loops stay optimizer-agnostic.
template <class T>
void apply_step(std::span<T> params, std::span<const T> grad, double lr,
                OptimizerState<T>& state) {
    if (state.kind == OptKind::adam)
        adam_step(params, grad, lr, state);
    else
        sgd_step(params, grad, lr, state);
}

}  // namespace introspect::optim
