#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/hash.hpp"

namespace introspect::nn {

enum class Padding { valid, same };

struct DenseLayer {
    int64_t in = 0;
    int64_t out = 0;
};

// Filters are stored [kh][kw][cin][cout]; activations are NHWC.
struct Conv2dLayer {
    int64_t kh = 0, kw = 0;
    int64_t cin = 0, cout = 0;
    int64_t stride = 1;
    Padding pad = Padding::valid;
};

struct MaxPoolLayer {
    int64_t size = 0;
    int64_t stride = 0;
    Padding pad = Padding::valid;
};

struct ReluLayer {};

struct DropoutLayer {
    double rate = 0.0;
};

// Loss head; only valid as the final layer.
struct SoftmaxXentLayer {};

using LayerDesc =
    std::variant<DenseLayer, Conv2dLayer, MaxPoolLayer, ReluLayer, DropoutLayer, SoftmaxXentLayer>;

struct Shape {
    int64_t h = 1, w = 1, c = 1;
    int64_t flat() const { return h * w * c; }
    bool operator==(const Shape&) const = default;
};

struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerDesc> layers;
};

enum class TensorRole { weight, bias };

// Identity of one trainable scalar: which layer, which tensor, which element.
// Dense weights index as {in, out}, conv weights as {kh, kw, cin, cout},
// biases as {out}; unused trailing slots are zero.
struct ParamRef {
    int layer = -1;
    TensorRole role = TensorRole::weight;
    std::array<int64_t, 4> index{};
    bool operator==(const ParamRef&) const = default;
};

struct LayerPlan {
    LayerDesc desc;
    Shape in, out;
    int64_t weight_offset = -1, weight_count = 0;
    int64_t bias_offset = -1, bias_count = 0;
    // Spatial padding applied on top/left (conv and pool only).
    int64_t pad_top = 0, pad_left = 0;
};

namespace detail {

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// Output extent and leading pad for one spatial axis.
inline std::pair<int64_t, int64_t> conv_axis(int64_t in, int64_t k, int64_t stride, Padding pad,
                                             const char* what, size_t layer_idx) {
    if (pad == Padding::valid) {
        if (in < k) {
            std::ostringstream os;
            os << what << " layer " << layer_idx << ": window " << k << " exceeds input extent "
               << in << " with valid padding";
            throw SpecError(os.str());
        }
        return {(in - k) / stride + 1, 0};
    }
    const int64_t out = ceil_div(in, stride);
    const int64_t total = std::max<int64_t>((out - 1) * stride + k - in, 0);
    return {out, total / 2};
}

}  // namespace detail

// A NetworkSpec checked for shape consistency, with the flat parameter layout
// worked out. Everything downstream (training, snapshots, jumps) addresses
// scalars through this layout.
class NetworkPlan {
public:
    static NetworkPlan compile(const NetworkSpec& spec) {
        NetworkPlan plan;
        plan.spec_ = spec;
        Shape cur = spec.input_shape;
        if (cur.flat() <= 0) throw SpecError("input shape must have positive volume");
        if (spec.layers.empty()) throw SpecError("network has no layers");

        int64_t offset = 0;
        for (size_t i = 0; i < spec.layers.size(); ++i) {
            LayerPlan lp;
            lp.desc = spec.layers[i];
            lp.in = cur;
            std::visit(
                [&](const auto& layer) {
                    using L = std::decay_t<decltype(layer)>;
                    if constexpr (std::is_same_v<L, DenseLayer>) {
                        if (layer.in <= 0 || layer.out <= 0)
                            throw SpecError(layer_msg(i, "dense dims must be positive"));
                        if (cur.flat() != layer.in)
                            throw SpecError(layer_msg(i, "dense expects input size " +
                                                             std::to_string(layer.in) + ", got " +
                                                             std::to_string(cur.flat())));
                        lp.weight_offset = offset;
                        lp.weight_count = layer.in * layer.out;
                        offset += lp.weight_count;
                        lp.bias_offset = offset;
                        lp.bias_count = layer.out;
                        offset += lp.bias_count;
                        cur = Shape{1, 1, layer.out};
                    } else if constexpr (std::is_same_v<L, Conv2dLayer>) {
                        if (layer.kh <= 0 || layer.kw <= 0 || layer.cin <= 0 || layer.cout <= 0 ||
                            layer.stride <= 0)
                            throw SpecError(layer_msg(i, "conv2d dims must be positive"));
                        if (cur.c != layer.cin)
                            throw SpecError(layer_msg(i, "conv2d expects " +
                                                             std::to_string(layer.cin) +
                                                             " input channels, got " +
                                                             std::to_string(cur.c)));
                        auto [oh, pt] =
                            detail::conv_axis(cur.h, layer.kh, layer.stride, layer.pad, "conv2d", i);
                        auto [ow, pl] =
                            detail::conv_axis(cur.w, layer.kw, layer.stride, layer.pad, "conv2d", i);
                        lp.pad_top = pt;
                        lp.pad_left = pl;
                        lp.weight_offset = offset;
                        lp.weight_count = layer.kh * layer.kw * layer.cin * layer.cout;
                        offset += lp.weight_count;
                        lp.bias_offset = offset;
                        lp.bias_count = layer.cout;
                        offset += lp.bias_count;
                        cur = Shape{oh, ow, layer.cout};
                    } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
                        if (layer.size <= 0 || layer.stride <= 0)
                            throw SpecError(layer_msg(i, "maxpool dims must be positive"));
                        auto [oh, pt] =
                            detail::conv_axis(cur.h, layer.size, layer.stride, layer.pad, "maxpool", i);
                        auto [ow, pl] =
                            detail::conv_axis(cur.w, layer.size, layer.stride, layer.pad, "maxpool", i);
                        lp.pad_top = pt;
                        lp.pad_left = pl;
                        cur = Shape{oh, ow, cur.c};
                    } else if constexpr (std::is_same_v<L, DropoutLayer>) {
                        if (!(layer.rate >= 0.0 && layer.rate < 1.0))
                            throw SpecError(layer_msg(i, "dropout rate must be in [0, 1)"));
                    } else if constexpr (std::is_same_v<L, SoftmaxXentLayer>) {
                        if (i + 1 != spec.layers.size())
                            throw SpecError(layer_msg(i, "softmax-xent must be the final layer"));
                        if (cur.h != 1 || cur.w != 1)
                            throw SpecError(layer_msg(i, "softmax-xent expects flat logits"));
                        plan.has_head_ = true;
                    }
                    // ReluLayer: shape-preserving, nothing to check.
                },
                spec.layers[i]);
            lp.out = cur;
            plan.layers_.push_back(lp);
        }
        plan.param_count_ = offset;
        plan.output_size_ = cur.flat();
        plan.spec_hash_ = plan.compute_hash();
        return plan;
    }

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<LayerPlan>& layers() const { return layers_; }
    int64_t param_count() const { return param_count_; }
    int64_t input_size() const { return spec_.input_shape.flat(); }
    // Logits width (= class count when a softmax-xent head is present).
    int64_t output_size() const { return output_size_; }
    bool has_xent_head() const { return has_head_; }
    uint64_t spec_hash() const { return spec_hash_; }

    // flat index -> (layer, role, element); inverse of flat_index().
    ParamRef locate(int64_t flat) const {
        if (flat < 0 || flat >= param_count_)
            throw IndexError("param index " + std::to_string(flat) + " outside [0, " +
                             std::to_string(param_count_) + ")");
        for (size_t li = 0; li < layers_.size(); ++li) {
            const LayerPlan& lp = layers_[li];
            if (lp.weight_count > 0 && flat >= lp.weight_offset &&
                flat < lp.weight_offset + lp.weight_count) {
                ParamRef ref;
                ref.layer = static_cast<int>(li);
                ref.role = TensorRole::weight;
                int64_t rem = flat - lp.weight_offset;
                if (const auto* d = std::get_if<DenseLayer>(&lp.desc)) {
                    ref.index = {rem / d->out, rem % d->out, 0, 0};
                } else {
                    const auto& c = std::get<Conv2dLayer>(lp.desc);
                    ref.index[3] = rem % c.cout;
                    rem /= c.cout;
                    ref.index[2] = rem % c.cin;
                    rem /= c.cin;
                    ref.index[1] = rem % c.kw;
                    ref.index[0] = rem / c.kw;
                }
                return ref;
            }
            if (lp.bias_count > 0 && flat >= lp.bias_offset &&
                flat < lp.bias_offset + lp.bias_count) {
                ParamRef ref;
                ref.layer = static_cast<int>(li);
                ref.role = TensorRole::bias;
                ref.index = {flat - lp.bias_offset, 0, 0, 0};
                return ref;
            }
        }
        throw IndexError("param index not covered by any layer segment");
    }

    int64_t flat_index(const ParamRef& ref) const {
        if (ref.layer < 0 || static_cast<size_t>(ref.layer) >= layers_.size())
            throw IndexError("layer id out of range");
        const LayerPlan& lp = layers_[static_cast<size_t>(ref.layer)];
        if (ref.role == TensorRole::bias) {
            if (lp.bias_count == 0 || ref.index[0] < 0 || ref.index[0] >= lp.bias_count)
                throw IndexError("bias element out of range");
            return lp.bias_offset + ref.index[0];
        }
        if (lp.weight_count == 0) throw IndexError("layer has no weights");
        int64_t rem = 0;
        if (const auto* d = std::get_if<DenseLayer>(&lp.desc)) {
            if (ref.index[0] < 0 || ref.index[0] >= d->in || ref.index[1] < 0 ||
                ref.index[1] >= d->out)
                throw IndexError("dense weight element out of range");
            rem = ref.index[0] * d->out + ref.index[1];
        } else {
            const auto& c = std::get<Conv2dLayer>(lp.desc);
            if (ref.index[0] < 0 || ref.index[0] >= c.kh || ref.index[1] < 0 ||
                ref.index[1] >= c.kw || ref.index[2] < 0 || ref.index[2] >= c.cin ||
                ref.index[3] < 0 || ref.index[3] >= c.cout)
                throw IndexError("conv weight element out of range");
            rem = ((ref.index[0] * c.kw + ref.index[1]) * c.cin + ref.index[2]) * c.cout +
                  ref.index[3];
        }
        return lp.weight_offset + rem;
    }

    // True for every flat index holding a bias scalar.
    std::vector<bool> bias_mask() const {
        std::vector<bool> mask(static_cast<size_t>(param_count_), false);
        for (const LayerPlan& lp : layers_)
            for (int64_t i = 0; i < lp.bias_count; ++i)
                mask[static_cast<size_t>(lp.bias_offset + i)] = true;
        return mask;
    }

private:
    static std::string layer_msg(size_t idx, const std::string& msg) {
        return "layer " + std::to_string(idx) + ": " + msg;
    }

    uint64_t compute_hash() const {
        std::ostringstream os;
        os << "in:" << spec_.input_shape.h << 'x' << spec_.input_shape.w << 'x'
           << spec_.input_shape.c << ';';
        for (const LayerDesc& desc : spec_.layers) {
            std::visit(
                [&](const auto& layer) {
                    using L = std::decay_t<decltype(layer)>;
                    if constexpr (std::is_same_v<L, DenseLayer>)
                        os << "dense:" << layer.in << ',' << layer.out;
                    else if constexpr (std::is_same_v<L, Conv2dLayer>)
                        os << "conv2d:" << layer.kh << ',' << layer.kw << ',' << layer.cin << ','
                           << layer.cout << ',' << layer.stride << ','
                           << (layer.pad == Padding::same ? "same" : "valid");
                    else if constexpr (std::is_same_v<L, MaxPoolLayer>)
                        os << "maxpool:" << layer.size << ',' << layer.stride << ','
                           << (layer.pad == Padding::same ? "same" : "valid");
                    else if constexpr (std::is_same_v<L, ReluLayer>)
                        os << "relu";
                    else if constexpr (std::is_same_v<L, DropoutLayer>)
                        os << "dropout:" << layer.rate;
                    else
                        os << "softmax-xent";
                },
                desc);
            os << ';';
        }
        return fnv1a64(os.str());
    }

    NetworkSpec spec_;
    std::vector<LayerPlan> layers_;
    int64_t param_count_ = 0;
    int64_t output_size_ = 0;
    bool has_head_ = false;
    uint64_t spec_hash_ = 0;
};

}  // namespace introspect::nn
