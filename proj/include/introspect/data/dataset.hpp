#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "introspect/errors.hpp"
#include "introspect/nn/batch.hpp"
#include "introspect/nn/spec.hpp"
#include "introspect/rng.hpp"

namespace introspect::data {

enum class Split { train, validation, test };

// Immutable labelled image set; pixels live in [0,1], layout N×H×W×C.
struct Dataset {
    int64_t n = 0;
    int64_t h = 0;
    int64_t w = 0;
    int64_t c = 1;
    std::vector<float> images;  // n * h * w * c
    std::vector<int32_t> labels;
    Split split = Split::train;

    int64_t sample_size() const { return h * w * c; }

    void validate() const {
        if (static_cast<int64_t>(labels.size()) != n)
            throw ShapeError("dataset: label count != n");
        if (static_cast<int64_t>(images.size()) != n * sample_size())
            throw ShapeError("dataset: image payload != n*h*w*c");
    }
};

// Copies the given sample indices into a dense Batch.
inline nn::Batch gather_batch(const Dataset& ds, const std::vector<int64_t>& indices) {
    nn::Batch batch;
    batch.n = static_cast<int64_t>(indices.size());
    const int64_t size = ds.sample_size();
    batch.inputs.resize(static_cast<size_t>(batch.n * size));
    batch.labels.resize(static_cast<size_t>(batch.n));
    for (int64_t i = 0; i < batch.n; ++i) {
        const int64_t src = indices[static_cast<size_t>(i)];
        if (src < 0 || src >= ds.n) throw IndexError("gather_batch: sample index out of range");
        std::copy_n(ds.images.begin() + src * size, size, batch.inputs.begin() + i * size);
        batch.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
    }
    return batch;
}

// One epoch of index batches: a seeded permutation of {0..N-1} chopped into
// batch_size groups, final short batch kept.
inline std::vector<std::vector<int64_t>> make_batches(const Dataset& ds, int64_t batch_size,
                                                      uint64_t epoch_seed) {
    if (ds.n == 0) throw EmptyDataset("make_batches: dataset is empty");
    if (batch_size < 1) throw SpecError("make_batches: batch_size must be >= 1");
    std::vector<int64_t> order(static_cast<size_t>(ds.n));
    std::iota(order.begin(), order.end(), int64_t{0});
    rng::Stream stream(rng::derive_key({epoch_seed, 0x62617463ull /* "batc" */}));
    rng::shuffle(order, stream);

    std::vector<std::vector<int64_t>> batches;
    batches.reserve(static_cast<size_t>((ds.n + batch_size - 1) / batch_size));
    for (int64_t start = 0; start < ds.n; start += batch_size) {
        const int64_t end = std::min(ds.n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

// Endless deterministic batch source: re-permutes per epoch with a seed
// derived from (seed, epoch index). Training loops pull one batch per step.
class BatchCursor {
  public:
    BatchCursor(const Dataset& ds, int64_t batch_size, uint64_t seed)
        : ds_(&ds), batch_size_(batch_size), seed_(seed) {}

    nn::Batch next() {
        if (epoch_batches_.empty() || cursor_ >= epoch_batches_.size()) {
            epoch_batches_ = make_batches(*ds_, batch_size_, rng::derive_key({seed_, epoch_}));
            cursor_ = 0;
            ++epoch_;
        }
        return gather_batch(*ds_, epoch_batches_[cursor_++]);
    }

  private:
    const Dataset* ds_;
    int64_t batch_size_;
    uint64_t seed_;
    uint64_t epoch_ = 0;
    std::vector<std::vector<int64_t>> epoch_batches_;
    size_t cursor_ = 0;
};

struct SynthOptions {
    int64_t h = 28;
    int64_t w = 28;
    int64_t c = 1;
    double amplitude = 0.30;      // blob peak height above background
    double noise = 0.25;          // per-pixel Gaussian noise sigma
    uint64_t sample_offset = 0;   // lets train/val draw disjoint sample streams
};

// Gaussian blobs in pixel space, one blob centre per class, plus a per-class
// strip pattern so classes stay separable once noise is added. Every pixel is
// derived from a counter-based stream keyed by (seed, sample id, pixel), so
// the arrays are identical across platforms and call orders.
inline Dataset synth_dataset(int64_t n, int64_t classes, uint64_t seed,
                             const SynthOptions& opt = {}) {
    if (classes < 2) throw SpecError("synth_dataset: need at least 2 classes");
    if (n < classes) throw SpecError("synth_dataset: need n >= classes");
    Dataset ds;
    ds.n = n;
    ds.h = opt.h;
    ds.w = opt.w;
    ds.c = opt.c;
    ds.images.resize(static_cast<size_t>(n * ds.sample_size()));
    ds.labels.resize(static_cast<size_t>(n));

    const double sigma = 0.18 * static_cast<double>(std::min(opt.h, opt.w));
    for (int64_t i = 0; i < n; ++i) {
        const int32_t label = static_cast<int32_t>(i % classes);
        ds.labels[static_cast<size_t>(i)] = label;
        const uint64_t sample_id = opt.sample_offset + static_cast<uint64_t>(i);

        // Blob centre: class anchor on a circle, jittered per sample.
        const double angle = 2.0 * 3.14159265358979323846 * label / static_cast<double>(classes);
        rng::Stream jitter(rng::derive_key({seed, 0x73796e74ull /* "synt" */, sample_id, 0}));
        const double cy = 0.5 * opt.h + 0.25 * opt.h * std::sin(angle) + jitter.normal(0.0, 1.0);
        const double cx = 0.5 * opt.w + 0.25 * opt.w * std::cos(angle) + jitter.normal(0.0, 1.0);

        for (int64_t y = 0; y < opt.h; ++y) {
            for (int64_t x = 0; x < opt.w; ++x) {
                const double dy = (y - cy) / sigma;
                const double dx = (x - cx) / sigma;
                double value = opt.amplitude * std::exp(-0.5 * (dy * dy + dx * dx));
                // Faint class-keyed vertical strip; survives pooling.
                if ((x * classes) / opt.w == label) value += 0.5 * opt.amplitude;
                for (int64_t ci = 0; ci < opt.c; ++ci) {
                    rng::Stream pix(rng::derive_key(
                        {seed, 0x70697865ull /* "pixe" */, sample_id,
                         static_cast<uint64_t>((y * opt.w + x) * opt.c + ci)}));
                    double v = value + opt.noise * pix.normal();
                    v = std::clamp(v, 0.0, 1.0);
                    ds.images[static_cast<size_t>(((i * opt.h + y) * opt.w + x) * opt.c + ci)] =
                        static_cast<float>(v);
                }
            }
        }
    }
    ds.validate();
    return ds;
}

}  // namespace introspect::data
