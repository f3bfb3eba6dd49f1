#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kshape/error.hpp"
#include "kshape/network_spec.hpp"
#include "kshape/tensor.hpp"

namespace kshape::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr int kNumClasses = 10;

/// Images in [0, 1], stored NCHW in one flat buffer, with their labels.
struct Dataset {
  std::string source;
  InputShape shape{1, 28, 28};
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t image_size() const {
    return std::size_t(shape.channels) * shape.height * shape.width;
  }
  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * image_size(), image_size());
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{source, shape, {}, {}, class_names};
    out.pixels.reserve(indices.size() * image_size());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
      auto img = image(i);
      out.pixels.insert(out.pixels.end(), img.begin(), img.end());
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  /// Gathers the listed samples into an (N, C, H, W) batch.
  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> indices) const {
    Tensor<T> out(Shape{indices.size(), std::size_t(shape.channels),
                        std::size_t(shape.height), std::size_t(shape.width)});
    auto dst = out.data();
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto img = image(indices[k]);
      std::copy(img.begin(), img.end(), dst.begin() + k * image_size());
    }
    return out;
  }
};

inline std::vector<std::string> mnist_class_names() {
  return {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
}

inline std::vector<std::string> cifar10_class_names() {
  return {"airplane", "automobile", "bird", "cat", "deer",
          "dog", "frog", "horse", "ship", "truck"};
}

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                               const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw DataError(path.string() + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(b, 4);
}

inline std::uint8_t to_byte(float v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace detail

/// Reads an IDX image file (magic 0x803, N x rows x cols) and its IDX label
/// file (magic 0x801). Pixels are scaled by 1/255.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        std::string source = "mnist") {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  const auto img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic) {
    throw DataError(images_path.string() + ": bad IDX image magic " + std::to_string(img_magic));
  }
  const auto lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelMagic) {
    throw DataError(labels_path.string() + ": bad IDX label magic " + std::to_string(lab_magic));
  }
  const std::size_t n = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw DataError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(n_labels) + " labels");
  }
  if (img.size() != 16 + n * rows * cols) {
    throw DataError(images_path.string() + ": expected " + std::to_string(16 + n * rows * cols) +
                    " bytes, found " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + n) {
    throw DataError(labels_path.string() + ": expected " + std::to_string(8 + n) +
                    " bytes, found " + std::to_string(lab.size()));
  }
  Dataset ds;
  ds.source = std::move(source);
  ds.shape = {1, int(rows), int(cols)};
  ds.class_names = mnist_class_names();
  ds.pixels.resize(n * rows * cols);
  for (std::size_t i = 0; i < ds.pixels.size(); ++i) ds.pixels[i] = float(img[16 + i]) / 255.0f;
  ds.labels.assign(lab.begin() + 8, lab.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.labels[i] >= kNumClasses) {
      throw DataError(labels_path.string() + ": label " + std::to_string(ds.labels[i]) +
                      " at byte " + std::to_string(8 + i));
    }
  }
  return ds;
}

/// Writes a single-channel dataset back out as an IDX image/label pair.
inline void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  if (ds.shape.channels != 1) throw DataError("IDX export needs single-channel images");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw DataError("cannot write IDX files next to " + images_path.string());
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, std::uint32_t(ds.size()));
  detail::write_be32(img, std::uint32_t(ds.shape.height));
  detail::write_be32(img, std::uint32_t(ds.shape.width));
  for (float v : ds.pixels) img.put(char(detail::to_byte(v)));
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, std::uint32_t(ds.size()));
  for (auto l : ds.labels) lab.put(char(l));
}

/// Concatenates CIFAR-10 binary batches: 3073-byte records of one label byte
/// followed by the red, green and blue 32x32 planes.
inline Dataset load_cifar10(std::span<const std::filesystem::path> batch_paths) {
  Dataset ds;
  ds.source = "cifar10";
  ds.shape = {3, 32, 32};
  ds.class_names = cifar10_class_names();
  for (const auto& path : batch_paths) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() % kCifarRecordBytes != 0) {
      const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
      throw DataError(path.string() + ": truncated record at byte offset " +
                      std::to_string(offset) + " (file length " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073)");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
      if (bytes[off] >= kNumClasses) {
        throw DataError(path.string() + ": label " + std::to_string(bytes[off]) +
                        " at byte offset " + std::to_string(off));
      }
      ds.labels.push_back(bytes[off]);
      for (std::size_t k = 1; k < kCifarRecordBytes; ++k) {
        ds.pixels.push_back(float(bytes[off + k]) / 255.0f);
      }
    }
  }
  return ds;
}

inline void write_cifar10(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.shape.channels != 3 || ds.shape.height != 32 || ds.shape.width != 32) {
    throw DataError("CIFAR-10 export needs 3x32x32 images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.put(char(ds.labels[i]));
    for (float v : ds.image(i)) out.put(char(detail::to_byte(v)));
  }
}

/// Shuffles indices with `seed`, then cuts consecutive disjoint parts of the
/// requested sizes.
inline std::vector<Dataset> split(const Dataset& ds, std::span<const std::size_t> sizes,
                                  std::uint64_t seed) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total > ds.size()) {
    throw ConfigError("split: requested " + std::to_string(total) + " samples from a dataset of " +
                      std::to_string(ds.size()));
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Dataset> parts;
  std::size_t start = 0;
  for (auto s : sizes) {
    parts.push_back(ds.subset(std::span<const std::size_t>(order).subspan(start, s)));
    start += s;
  }
  return parts;
}

inline std::vector<Dataset> split(const Dataset& ds, std::initializer_list<std::size_t> sizes,
                                  std::uint64_t seed) {
  return split(ds, std::span<const std::size_t>(sizes.begin(), sizes.size()), seed);
}

inline constexpr int kAugmentPad = 4;

/// Crop offset into the zero-padded canvas (0..8 per axis; 4 is centred) and
/// whether the crop is mirrored.
struct AugmentChoice {
  int offset_y = kAugmentPad;
  int offset_x = kAugmentPad;
  bool flip = false;
};

template <typename Rng>
AugmentChoice draw_augment(Rng& rng) {
  std::uniform_int_distribution<int> offset(0, 2 * kAugmentPad);
  std::bernoulli_distribution flip(0.5);
  AugmentChoice c;
  c.offset_y = offset(rng);
  c.offset_x = offset(rng);
  c.flip = flip(rng);
  return c;
}

/// Pad 4 zeros per side, take the HxW window at the chosen offset, then
/// optionally mirror horizontally. `dst` and `src` are one CHW image each.
inline void augment(std::span<const float> src, std::span<float> dst, InputShape shape,
                    AugmentChoice choice) {
  const int h = shape.height, w = shape.width;
  for (int c = 0; c < shape.channels; ++c) {
    const float* plane = src.data() + std::size_t(c) * h * w;
    float* out = dst.data() + std::size_t(c) * h * w;
    for (int y = 0; y < h; ++y) {
      const int sy = y + choice.offset_y - kAugmentPad;
      for (int x = 0; x < w; ++x) {
        const int cx = choice.flip ? w - 1 - x : x;
        const int sx = cx + choice.offset_x - kAugmentPad;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        out[std::size_t(y) * w + x] = inside ? plane[std::size_t(sy) * w + sx] : 0.0f;
      }
    }
  }
}

template <typename Rng>
std::vector<float> augment(std::span<const float> image, InputShape shape, Rng& rng) {
  std::vector<float> out(image.size());
  augment(image, out, shape, draw_augment(rng));
  return out;
}

}  // namespace kshape::data
