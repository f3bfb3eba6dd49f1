#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kshape/tensor.hpp"

namespace kshape::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

/// One Adam update over `params`, reading each parameter's gradient buffer.
/// `lr` overrides config.lr so schedules can change it without touching state.
/// With weight decay, p -= lr * wd * p is applied before the Adam delta.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state, double lr) {
  for (const Tensor<T>* p : params) {
    if (p->grad().size() != p->size()) {
      throw ShapeError("adam_step: parameter " + to_string(p->shape()) +
                       " has no gradient buffer");
    }
    for (T g : p->grad()) {
      if (!std::isfinite(g)) {
        throw ComputeError("adam_step: non-finite gradient at step " +
                           std::to_string(state.step + 1));
      }
    }
  }
  if (state.m.empty()) {
    for (const Tensor<T>* p : params) {
      state.m.emplace_back(p->size(), T{0});
      state.v.emplace_back(p->size(), T{0});
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter count changed between steps");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, double(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, double(state.step));
  const T b1 = T(c.beta1), b2 = T(c.beta2), eps = T(c.eps);
  const T c1 = T(correction1), c2 = T(correction2), rate = T(lr);
  const T decay = T(lr * c.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    auto values = p.data();
    std::span<const T> grad = std::as_const(p).grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != values.size()) {
      throw ShapeError("adam_step: moment shape mismatch");
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      const T g = grad[k];
      m[k] = b1 * m[k] + (T{1} - b1) * g;
      v[k] = b2 * v[k] + (T{1} - b2) * g * g;
      if (c.weight_decay > 0) values[k] -= decay * values[k];
      const T m_hat = m[k] / c1;
      const T v_hat = v[k] / c2;
      values[k] -= rate * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  adam_step(params, state, state.config.lr);
}

}  // namespace kshape::nn
