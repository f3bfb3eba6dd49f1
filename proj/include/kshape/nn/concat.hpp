#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "kshape/tensor.hpp"

namespace kshape::nn {

/// Stacks (N, Ci, H, W) parts along the channel axis in list order.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no parts");
  const Shape& first = parts.front().shape();
  if (first.size() != 4) throw ShapeError("concat_channels: parts must be rank 4");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError(
          "concat_channels: part " + to_string(s) + " does not match " +
          to_string(first) +
          " in N/H/W; every branch must be same-padded so its output keeps the "
          "input resolution");
    }
    channels += s[1];
  }
  const std::size_t n_batch = first[0], hw = first[2] * first[3];
  Tensor<T> out(Shape{n_batch, channels, first[2], first[3]});
  T* dst = out.data().data();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (const auto& p : parts) {
      const std::size_t block = p.dim(1) * hw;
      const T* src = p.data().data() + n * block;
      dst = std::copy(src, src + block, dst);
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  return concat_channels(std::span<const Tensor<T>>(parts));
}

/// Inverse of concat_channels for gradients: slices `upstream` back into
/// pieces with the given channel counts.
template <typename T>
std::vector<Tensor<T>> split_grad(const Tensor<T>& upstream,
                                  std::span<const std::size_t> channels) {
  const Shape& s = upstream.shape();
  std::size_t total = 0;
  for (auto c : channels) total += c;
  if (s.size() != 4 || total != s[1]) {
    throw ShapeError("split_grad: channel counts do not sum to " +
                     to_string(upstream.shape()));
  }
  const std::size_t hw = s[2] * s[3];
  std::vector<Tensor<T>> parts;
  parts.reserve(channels.size());
  for (auto c : channels) parts.emplace_back(Shape{s[0], c, s[2], s[3]});
  const T* src = upstream.data().data();
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t block = channels[i] * hw;
      std::copy(src, src + block, parts[i].data().data() + n * block);
      src += block;
    }
  }
  return parts;
}

}  // namespace kshape::nn
