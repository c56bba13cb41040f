#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/hash.hpp"
#include "introspect/nn/batch.hpp"
#include "introspect/nn/init.hpp"
#include "introspect/nn/spec.hpp"
#include "introspect/rng.hpp"

namespace introspect::nn {

enum class Mode { train, eval };

namespace detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<Mat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

// Cheap fingerprint of a parameter vector (length + sampled values); lets
// backward notice when its forward state no longer matches the params.
template <class T>
uint64_t params_token(std::span<const T> params) {
    const uint64_t len = params.size();
    uint64_t h = fnv1a64(&len, sizeof(len));
    const size_t n = params.size();
    const size_t samples = std::min<size_t>(n, 64);
    for (size_t k = 0; k < samples; ++k) {
        const T v = params[k * (n - 1) / (samples > 1 ? samples - 1 : 1)];
        h = fnv1a64(&v, sizeof(T), h);
    }
    return h;
}

// Gathers conv patches: rows index (batch, oy, ox), columns (ky, kx, ci).
// Out-of-range taps (same padding) contribute zero.
template <class T>
void im2col(const T* x, int64_t n, const Shape& in, const Conv2dLayer& conv, int64_t oh,
            int64_t ow, int64_t pad_top, int64_t pad_left, T* patches) {
    const int64_t cols = conv.kh * conv.kw * conv.cin;
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                T* row = patches + ((b * oh + oy) * ow + ox) * cols;
                for (int64_t ky = 0; ky < conv.kh; ++ky) {
                    const int64_t iy = oy * conv.stride - pad_top + ky;
                    for (int64_t kx = 0; kx < conv.kw; ++kx) {
                        const int64_t ix = ox * conv.stride - pad_left + kx;
                        T* dst = row + (ky * conv.kw + kx) * conv.cin;
                        if (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) {
                            const T* src = x + ((b * in.h + iy) * in.w + ix) * in.c;
                            for (int64_t ci = 0; ci < conv.cin; ++ci) dst[ci] = src[ci];
                        } else {
                            for (int64_t ci = 0; ci < conv.cin; ++ci) dst[ci] = T(0);
                        }
                    }
                }
            }
        }
    }
}

// Column totals of a row-major (rows x width) block, accumulated row by row
// so the result is independent of buffer addresses (bit-reproducible runs).
template <class T>
void sum_rows(const T* x, int64_t rows, int64_t width, T* out) {
    for (int64_t j = 0; j < width; ++j) out[j] = T(0);
    for (int64_t i = 0; i < rows; ++i) {
        const T* row = x + i * width;
        for (int64_t j = 0; j < width; ++j) out[j] += row[j];
    }
}

// Scatter-adds patch gradients back onto the input image (inverse of im2col).
template <class T>
void col2im(const T* patches, int64_t n, const Shape& in, const Conv2dLayer& conv, int64_t oh,
            int64_t ow, int64_t pad_top, int64_t pad_left, T* dx) {
    const int64_t cols = conv.kh * conv.kw * conv.cin;
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                const T* row = patches + ((b * oh + oy) * ow + ox) * cols;
                for (int64_t ky = 0; ky < conv.kh; ++ky) {
                    const int64_t iy = oy * conv.stride - pad_top + ky;
                    if (iy < 0 || iy >= in.h) continue;
                    for (int64_t kx = 0; kx < conv.kw; ++kx) {
                        const int64_t ix = ox * conv.stride - pad_left + kx;
                        if (ix < 0 || ix >= in.w) continue;
                        const T* src = row + (ky * conv.kw + kx) * conv.cin;
                        T* dst = dx + ((b * in.h + iy) * in.w + ix) * in.c;
                        for (int64_t ci = 0; ci < conv.cin; ++ci) dst[ci] += src[ci];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Per-layer activations plus whatever backward needs (pool winners, dropout
// masks). acts[i] is the input to layer i; acts.back() holds the logits.
template <class T>
struct ForwardState {
    Mode mode = Mode::eval;
    int64_t n = 0;
    std::vector<std::vector<T>> acts;
    std::vector<std::vector<int64_t>> pool_src;
    std::vector<std::vector<T>> drop_mask;
    uint64_t spec_hash = 0;
    uint64_t params_token = 0;
};

// Runs the network on a batch. `seed` is consumed only by dropout layers in
// train mode; eval ignores dropout entirely.
template <class T>
ForwardState<T> forward(const NetworkPlan& plan, std::span<const T> params,
                        std::span<const T> inputs, int64_t n, Mode mode, uint64_t seed = 0) {
    if (static_cast<int64_t>(params.size()) != plan.param_count())
        throw ShapeError("params length " + std::to_string(params.size()) + " != plan count " +
                         std::to_string(plan.param_count()));
    if (n <= 0 || static_cast<int64_t>(inputs.size()) != n * plan.input_size())
        throw ShapeError("batch inputs do not match input shape");

    const auto& layers = plan.layers();
    ForwardState<T> state;
    state.mode = mode;
    state.n = n;
    state.spec_hash = plan.spec_hash();
    state.params_token = detail::params_token(params);
    state.acts.reserve(layers.size() + 1);
    state.acts.emplace_back(inputs.begin(), inputs.end());
    state.pool_src.resize(layers.size());
    state.drop_mask.resize(layers.size());

    for (size_t li = 0; li < layers.size(); ++li) {
        const LayerPlan& lp = layers[li];
        const std::vector<T>& x = state.acts.back();
        std::vector<T> y;

        if (const auto* dense = std::get_if<DenseLayer>(&lp.desc)) {
            y.resize(static_cast<size_t>(n * dense->out));
            detail::ConstMapMat<T> X(x.data(), n, dense->in);
            detail::ConstMapMat<T> W(params.data() + lp.weight_offset, dense->in, dense->out);
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(
                params.data() + lp.bias_offset, dense->out);
            detail::MapMat<T> Y(y.data(), n, dense->out);
            Y.noalias() = X * W;
            Y.rowwise() += b;
        } else if (const auto* conv = std::get_if<Conv2dLayer>(&lp.desc)) {
            const int64_t oh = lp.out.h, ow = lp.out.w;
            const int64_t cols = conv->kh * conv->kw * conv->cin;
            std::vector<T> patches(static_cast<size_t>(n * oh * ow * cols));
            detail::im2col(x.data(), n, lp.in, *conv, oh, ow, lp.pad_top, lp.pad_left,
                           patches.data());
            y.resize(static_cast<size_t>(n * oh * ow * conv->cout));
            detail::ConstMapMat<T> P(patches.data(), n * oh * ow, cols);
            detail::ConstMapMat<T> W(params.data() + lp.weight_offset, cols, conv->cout);
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(
                params.data() + lp.bias_offset, conv->cout);
            detail::MapMat<T> Y(y.data(), n * oh * ow, conv->cout);
            Y.noalias() = P * W;
            Y.rowwise() += b;
        } else if (const auto* pool = std::get_if<MaxPoolLayer>(&lp.desc)) {
            const int64_t oh = lp.out.h, ow = lp.out.w, c = lp.in.c;
            y.resize(static_cast<size_t>(n * oh * ow * c));
            auto& src = state.pool_src[li];
            src.resize(y.size());
            for (int64_t b = 0; b < n; ++b) {
                for (int64_t oy = 0; oy < oh; ++oy) {
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        for (int64_t ci = 0; ci < c; ++ci) {
                            T best{};
                            int64_t best_idx = -1;
                            for (int64_t ky = 0; ky < pool->size; ++ky) {
                                const int64_t iy = oy * pool->stride - lp.pad_top + ky;
                                if (iy < 0 || iy >= lp.in.h) continue;
                                for (int64_t kx = 0; kx < pool->size; ++kx) {
                                    const int64_t ix = ox * pool->stride - lp.pad_left + kx;
                                    if (ix < 0 || ix >= lp.in.w) continue;
                                    const int64_t idx = ((b * lp.in.h + iy) * lp.in.w + ix) * c + ci;
                                    if (best_idx < 0 || x[static_cast<size_t>(idx)] > best) {
                                        best = x[static_cast<size_t>(idx)];
                                        best_idx = idx;
                                    }
                                }
                            }
                            const int64_t out_idx = ((b * oh + oy) * ow + ox) * c + ci;
                            y[static_cast<size_t>(out_idx)] = best;
                            src[static_cast<size_t>(out_idx)] = best_idx;
                        }
                    }
                }
            }
        } else if (std::holds_alternative<ReluLayer>(lp.desc)) {
            y.resize(x.size());
            for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        } else if (const auto* drop = std::get_if<DropoutLayer>(&lp.desc)) {
            if (mode == Mode::train && drop->rate > 0.0) {
                auto& mask = state.drop_mask[li];
                mask.resize(x.size());
                y.resize(x.size());
                const T scale = T(1) / T(1.0 - drop->rate);
                for (size_t i = 0; i < x.size(); ++i) {
                    rng::Stream s(rng::derive_key({seed, 0x64726f70ull /* "drop" */,
                                                   static_cast<uint64_t>(li),
                                                   static_cast<uint64_t>(i)}));
                    mask[i] = s.uniform01() < drop->rate ? T(0) : scale;
                    y[i] = x[i] * mask[i];
                }
            } else {
                y = x;
            }
        } else {
            // softmax-xent head: logits pass through; loss lives in backward.
            y = x;
        }
        state.acts.push_back(std::move(y));
    }
    return state;
}

template <class T>
const std::vector<T>& logits(const ForwardState<T>& state) {
    return state.acts.back();
}

// Mean softmax cross-entropy; optionally emits dLoss/dlogits.
template <class T>
T xent_loss(const NetworkPlan& plan, const std::vector<T>& logit_values,
            std::span<const int32_t> labels, std::vector<T>* dlogits = nullptr) {
    const int64_t n = static_cast<int64_t>(labels.size());
    const int64_t classes = plan.output_size();
    if (static_cast<int64_t>(logit_values.size()) != n * classes)
        throw ShapeError("logits/labels size mismatch");
    if (dlogits) dlogits->assign(logit_values.size(), T(0));
    T total = T(0);
    for (int64_t b = 0; b < n; ++b) {
        const int32_t label = labels[static_cast<size_t>(b)];
        if (label < 0 || label >= classes) throw ShapeError("label outside [0, num_classes)");
        const T* z = logit_values.data() + b * classes;
        T zmax = z[0];
        for (int64_t j = 1; j < classes; ++j) zmax = std::max(zmax, z[j]);
        T sum = T(0);
        for (int64_t j = 0; j < classes; ++j) sum += std::exp(z[j] - zmax);
        const T lse = zmax + std::log(sum);
        total += lse - z[label];
        if (dlogits) {
            T* d = dlogits->data() + b * classes;
            for (int64_t j = 0; j < classes; ++j) d[j] = std::exp(z[j] - zmax) / sum / T(n);
            d[label] -= T(1) / T(n);
        }
    }
    return total / T(n);
}

namespace detail {

template <class T>
void check_state(const NetworkPlan& plan, std::span<const T> params,
                 const ForwardState<T>& state) {
    if (state.mode != Mode::train)
        throw StateError("backward requires a train-mode forward state");
    if (state.spec_hash != plan.spec_hash())
        throw StateError("forward state belongs to a different network spec");
    if (state.params_token != params_token(params))
        throw StateError("params changed since forward; state is stale");
}

// Backprop from dLoss/dlogits down to the flat gradient vector.
template <class T>
std::vector<T> backprop(const NetworkPlan& plan, std::span<const T> params,
                        std::vector<T> delta, const ForwardState<T>& state) {
    const auto& layers = plan.layers();
    const int64_t n = state.n;
    std::vector<T> grad(static_cast<size_t>(plan.param_count()), T(0));

    for (size_t li = layers.size(); li-- > 0;) {
        const LayerPlan& lp = layers[li];
        const std::vector<T>& x = state.acts[li];

        if (const auto* dense = std::get_if<DenseLayer>(&lp.desc)) {
            ConstMapMat<T> X(x.data(), n, dense->in);
            ConstMapMat<T> dY(delta.data(), n, dense->out);
            ConstMapMat<T> W(params.data() + lp.weight_offset, dense->in, dense->out);
            MapMat<T> dW(grad.data() + lp.weight_offset, dense->in, dense->out);
            dW.noalias() = X.transpose() * dY;
            // Bias gradients are summed by hand in a fixed order: Eigen's
            // column reduction peels by destination alignment, which makes the
            // rounding depend on where the gradient buffer landed on the heap.
            detail::sum_rows(delta.data(), n, dense->out, grad.data() + lp.bias_offset);
            std::vector<T> dx(static_cast<size_t>(n * dense->in));
            MapMat<T> dX(dx.data(), n, dense->in);
            dX.noalias() = dY * W.transpose();
            delta = std::move(dx);
        } else if (const auto* conv = std::get_if<Conv2dLayer>(&lp.desc)) {
            const int64_t oh = lp.out.h, ow = lp.out.w;
            const int64_t cols = conv->kh * conv->kw * conv->cin;
            std::vector<T> patches(static_cast<size_t>(n * oh * ow * cols));
            im2col(x.data(), n, lp.in, *conv, oh, ow, lp.pad_top, lp.pad_left, patches.data());
            ConstMapMat<T> P(patches.data(), n * oh * ow, cols);
            ConstMapMat<T> dY(delta.data(), n * oh * ow, conv->cout);
            ConstMapMat<T> W(params.data() + lp.weight_offset, cols, conv->cout);
            MapMat<T> dW(grad.data() + lp.weight_offset, cols, conv->cout);
            dW.noalias() = P.transpose() * dY;
            detail::sum_rows(delta.data(), n * oh * ow, conv->cout, grad.data() + lp.bias_offset);
            std::vector<T> dpatches(patches.size());
            MapMat<T> dP(dpatches.data(), n * oh * ow, cols);
            dP.noalias() = dY * W.transpose();
            std::vector<T> dx(x.size(), T(0));
            col2im(dpatches.data(), n, lp.in, *conv, oh, ow, lp.pad_top, lp.pad_left, dx.data());
            delta = std::move(dx);
        } else if (std::holds_alternative<MaxPoolLayer>(lp.desc)) {
            std::vector<T> dx(x.size(), T(0));
            const auto& src = state.pool_src[li];
            for (size_t i = 0; i < delta.size(); ++i)
                dx[static_cast<size_t>(src[i])] += delta[i];
            delta = std::move(dx);
        } else if (std::holds_alternative<ReluLayer>(lp.desc)) {
            for (size_t i = 0; i < delta.size(); ++i)
                if (!(x[i] > T(0))) delta[i] = T(0);
        } else if (std::holds_alternative<DropoutLayer>(lp.desc)) {
            const auto& mask = state.drop_mask[li];
            if (!mask.empty())
                for (size_t i = 0; i < delta.size(); ++i) delta[i] *= mask[i];
        }
        // softmax-xent head: delta is already d/dlogits.
    }
    return grad;
}

}  // namespace detail

template <class T>
struct BackwardResult {
    std::vector<T> grad;
    T loss = T(0);
};

// Gradient of the mean cross-entropy loss; requires a softmax-xent head.
template <class T>
BackwardResult<T> backward(const NetworkPlan& plan, std::span<const T> params,
                           std::span<const int32_t> labels, const ForwardState<T>& state) {
    if (!plan.has_xent_head())
        throw StateError("backward(labels) needs a softmax-xent head; use backward_from_dlogits");
    detail::check_state(plan, params, state);
    if (static_cast<int64_t>(labels.size()) != state.n)
        throw ShapeError("labels length does not match batch");
    BackwardResult<T> result;
    std::vector<T> dlogits;
    result.loss = xent_loss(plan, logits(state), labels, &dlogits);
    result.grad = detail::backprop(plan, params, std::move(dlogits), state);
    return result;
}

// Backprop from an externally supplied dLoss/dlogits (regression heads).
template <class T>
std::vector<T> backward_from_dlogits(const NetworkPlan& plan, std::span<const T> params,
                                     std::vector<T> dlogits, const ForwardState<T>& state) {
    detail::check_state(plan, params, state);
    if (static_cast<int64_t>(dlogits.size()) != state.n * plan.output_size())
        throw ShapeError("dlogits size does not match logits");
    return detail::backprop(plan, params, std::move(dlogits), state);
}

// float-path conveniences used by the training loops.
inline ForwardState<float> forward(const NetworkPlan& plan, const Params& params,
                                   const Batch& batch, Mode mode, uint64_t seed = 0) {
    return forward<float>(plan, std::span<const float>(params.data),
                          std::span<const float>(batch.inputs), batch.n, mode, seed);
}

inline BackwardResult<float> backward(const NetworkPlan& plan, const Params& params,
                                      const Batch& batch, const ForwardState<float>& state) {
    return backward<float>(plan, std::span<const float>(params.data),
                           std::span<const int32_t>(batch.labels), state);
}

}  // namespace introspect::nn
