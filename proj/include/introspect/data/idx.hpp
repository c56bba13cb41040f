#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "introspect/data/dataset.hpp"
#include "introspect/errors.hpp"

namespace introspect::data {

namespace detail {

inline uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("idx: truncated while reading " + what);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace detail

inline constexpr uint32_t kIdxImageMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelMagic = 0x00000801;

// Loads an MNIST-style IDX image/label pair. Raw u8 pixels are scaled by
// 1/255 into [0,1]; labels stay integer class ids.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        Split split = Split::train) {
    auto img = detail::open_input(images_path);
    if (detail::read_be32(img, "image magic") != kIdxImageMagic)
        throw FormatError("idx: bad image magic in " + images_path.string());
    const uint32_t n = detail::read_be32(img, "image count");
    const uint32_t h = detail::read_be32(img, "image rows");
    const uint32_t w = detail::read_be32(img, "image cols");

    auto lab = detail::open_input(labels_path);
    if (detail::read_be32(lab, "label magic") != kIdxLabelMagic)
        throw FormatError("idx: bad label magic in " + labels_path.string());
    const uint32_t ln = detail::read_be32(lab, "label count");
    if (ln != n)
        throw FormatError("idx: image count " + std::to_string(n) + " != label count " +
                          std::to_string(ln));

    Dataset ds;
    ds.n = n;
    ds.h = h;
    ds.w = w;
    ds.c = 1;
    ds.split = split;

    std::vector<unsigned char> pixels(static_cast<size_t>(n) * h * w);
    if (!img.read(reinterpret_cast<char*>(pixels.data()),
                  static_cast<std::streamsize>(pixels.size())))
        throw FormatError("idx: truncated image payload in " + images_path.string());
    ds.images.resize(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i)
        ds.images[i] = static_cast<float>(pixels[i]) / 255.0f;

    std::vector<unsigned char> raw_labels(n);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()),
                  static_cast<std::streamsize>(raw_labels.size())))
        throw FormatError("idx: truncated label payload in " + labels_path.string());
    ds.labels.assign(raw_labels.begin(), raw_labels.end());

    ds.validate();
    return ds;
}

// Writes a Dataset back to the IDX pair format (pixels re-quantised to u8).
// Only meaningful for datasets whose pixels are exact multiples of 1/255,
// e.g. anything produced by load_idx — the round-trip is then exact.
inline void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
    if (ds.c != 1) throw FormatError("idx: only single-channel datasets can be saved");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot create " + images_path.string());
    detail::write_be32(img, kIdxImageMagic);
    detail::write_be32(img, static_cast<uint32_t>(ds.n));
    detail::write_be32(img, static_cast<uint32_t>(ds.h));
    detail::write_be32(img, static_cast<uint32_t>(ds.w));
    for (float v : ds.images) {
        const auto byte = static_cast<unsigned char>(v * 255.0f + 0.5f);
        img.put(static_cast<char>(byte));
    }
    if (!img) throw IoError("write failed for " + images_path.string());

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot create " + labels_path.string());
    detail::write_be32(lab, kIdxLabelMagic);
    detail::write_be32(lab, static_cast<uint32_t>(ds.n));
    for (int32_t v : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(v)));
    if (!lab) throw IoError("write failed for " + labels_path.string());
}

// Conventional MNIST file names under a data directory.
struct MnistPaths {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

inline MnistPaths mnist_paths(const std::filesystem::path& dir) {
    return {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
            dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
}

}  // namespace introspect::data
