#pragma once

#include "kshape/tensor.hpp"

namespace kshape::nn {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

/// Gradient passes where the forward output was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& upstream) {
  if (output.shape() != upstream.shape()) {
    throw ShapeError("relu_backward: " + to_string(upstream.shape()) + " vs " +
                     to_string(output.shape()));
  }
  Tensor<T> grad = upstream;
  auto g = grad.data();
  auto y = output.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(y[i] > T{0})) g[i] = T{0};
  }
  return grad;
}

}  // namespace kshape::nn
