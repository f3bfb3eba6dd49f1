#pragma once

#include <Eigen/Core>

#include <string>

#include "kshape/nn/conv.hpp"
#include "kshape/tensor.hpp"

namespace kshape::nn {

/// Fully-connected layer: logits[j] = bias[j] + sum_i in[i] * w[j, i].
template <typename T>
struct Dense {
  std::string name;
  int in_features = 1;
  int out_features = 1;
  Tensor<T> weights;  // (out, in)
  Tensor<T> bias;     // (out)

  Dense() = default;
  Dense(std::string layer_name, int in, int out)
      : name(std::move(layer_name)),
        in_features(in),
        out_features(out),
        weights(Shape{std::size_t(out), std::size_t(in)}),
        bias(Shape{std::size_t(out)}) {}
};

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

namespace detail {
template <typename T>
std::size_t check_dense_input(const Tensor<T>& input, const Dense<T>& layer) {
  const std::size_t n = input.dim(0);
  if (input.size() != n * std::size_t(layer.in_features)) {
    throw ShapeError("dense '" + layer.name + "': expected " +
                     std::to_string(layer.in_features) + " features per sample, got input " +
                     to_string(input.shape()));
  }
  return n;
}
}  // namespace detail

/// Input is any tensor whose leading axis is the batch; trailing axes are
/// flattened. Returns (N, out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Dense<T>& layer) {
  const std::size_t n = detail::check_dense_input(input, layer);
  Tensor<T> out(Shape{n, std::size_t(layer.out_features)});
  ConstMatrixMap<T> x(input.data().data(), n, layer.in_features);
  ConstMatrixMap<T> w(layer.weights.data().data(), layer.out_features, layer.in_features);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(layer.bias.data().data(),
                                                          layer.out_features);
  MatrixMap<T> y(out.data().data(), n, layer.out_features);
  y.noalias() = x * w.transpose();
  y.rowwise() += b;
  return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Dense<T>& layer,
                             const Tensor<T>& upstream) {
  const std::size_t n = detail::check_dense_input(input, layer);
  if (upstream.size() != n * std::size_t(layer.out_features)) {
    throw ShapeError("dense '" + layer.name + "': upstream gradient " +
                     to_string(upstream.shape()) + " does not match output");
  }
  DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(layer.weights.shape()),
                  Tensor<T>(layer.bias.shape())};
  ConstMatrixMap<T> x(input.data().data(), n, layer.in_features);
  ConstMatrixMap<T> w(layer.weights.data().data(), layer.out_features, layer.in_features);
  ConstMatrixMap<T> dy(upstream.data().data(), n, layer.out_features);
  MatrixMap<T>(g.weights.data().data(), layer.out_features, layer.in_features)
      .noalias() = dy.transpose() * x;
  auto d_bias = g.bias.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (int j = 0; j < layer.out_features; ++j) d_bias[j] += upstream[s * layer.out_features + j];
  }
  MatrixMap<T>(g.input.data().data(), n, layer.in_features).noalias() = dy * w;
  return g;
}

}  // namespace kshape::nn
