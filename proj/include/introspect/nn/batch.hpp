#pragma once

#include <cstdint>
#include <vector>

namespace introspect::nn {

// One mini-batch: NHWC pixels flattened row-major, integer class labels.
struct Batch {
    int64_t n = 0;
    std::vector<float> inputs;
    std::vector<int32_t> labels;
};

}  // namespace introspect::nn
