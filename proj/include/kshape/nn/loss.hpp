#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "kshape/tensor.hpp"

namespace kshape::nn {

template <typename T>
struct LossResult {
  T loss;
  std::vector<T> logit_grad;
};

/// loss = logsumexp(logits) - logits[label], with the max subtracted before
/// exponentiating. Gradient is softmax(logits) - onehot(label).
template <typename T>
LossResult<T> softmax_cross_entropy(std::span<const T> logits, int label) {
  const int classes = static_cast<int>(logits.size());
  if (label < 0 || label >= classes) {
    throw ComputeError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(classes) + ")");
  }
  const T peak = *std::max_element(logits.begin(), logits.end());
  LossResult<T> r{T{0}, std::vector<T>(logits.size())};
  T sum = 0;
  for (int j = 0; j < classes; ++j) {
    r.logit_grad[j] = std::exp(logits[j] - peak);
    sum += r.logit_grad[j];
  }
  r.loss = std::log(sum) + peak - logits[label];
  for (auto& g : r.logit_grad) g /= sum;
  r.logit_grad[label] -= T{1};
  return r;
}

/// Mean loss over a batch of logits (N, C). The returned gradient is already
/// divided by N.
template <typename T>
LossResult<T> softmax_cross_entropy_batch(const Tensor<T>& logits,
                                          std::span<const int> labels) {
  const std::size_t n = logits.dim(0), classes = logits.size() / n;
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy_batch: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  LossResult<T> r{T{0}, std::vector<T>(logits.size())};
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = logits.data().subspan(i * classes, classes);
    auto one = softmax_cross_entropy<T>(row, labels[i]);
    r.loss += one.loss;
    for (std::size_t j = 0; j < classes; ++j) {
      r.logit_grad[i * classes + j] = one.logit_grad[j] * inv_n;
    }
  }
  r.loss *= inv_n;
  return r;
}

}  // namespace kshape::nn
