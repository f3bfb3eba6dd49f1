#pragma once

#include <cstdint>
#include <vector>

#include "kshape/tensor.hpp"

namespace kshape::nn {

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pooling with stride 2. An odd trailing row or column is dropped;
/// ties go to the first element in row-major window order.
template <typename T>
PoolResult<T> maxpool2x2(const Tensor<T>& input) {
  if (input.rank() != 4 || input.dim(2) < 2 || input.dim(3) < 2) {
    throw ShapeError("maxpool2x2: needs (N, C, H>=2, W>=2), got " +
                     to_string(input.shape()));
  }
  const std::size_t n_batch = input.dim(0), c = input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>(Shape{n_batch, c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  const T* in = input.data().data();
  T* out = r.output.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n_batch * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + 2 * y * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : cand) {
          if (in[idx] > in[best]) best = idx;
        }
        out[o] = in[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

/// Routes each upstream gradient to the input position that won the max.
template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape,
                              const std::vector<std::uint32_t>& argmax,
                              const Tensor<T>& upstream) {
  if (upstream.size() != argmax.size()) {
    throw ShapeError("maxpool2x2_backward: upstream " + to_string(upstream.shape()) +
                     " does not match pooled output");
  }
  Tensor<T> grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += upstream[i];
  return grad;
}

}  // namespace kshape::nn
