#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kshape/genotype.hpp"
#include "kshape/network_spec.hpp"
#include "kshape/nn/activation.hpp"
#include "kshape/nn/concat.hpp"
#include "kshape/nn/conv.hpp"
#include "kshape/nn/dense.hpp"
#include "kshape/nn/pool.hpp"

namespace kshape::nn {

/// Scalar multiplications executed by one instrumented forward pass.
struct MultCount {
  std::uint64_t conv = 0;
  std::uint64_t fc_hidden = 0;
  std::uint64_t classifier = 0;
};

template <typename T>
Tensor<T> dense_forward_direct(const Tensor<T>& input, const Dense<T>& layer,
                               std::uint64_t* mult_counter) {
  const std::size_t n = detail::check_dense_input(input, layer);
  Tensor<T> out(Shape{n, std::size_t(layer.out_features)});
  std::uint64_t mults = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (int j = 0; j < layer.out_features; ++j) {
      T acc = layer.bias[j];
      for (int i = 0; i < layer.in_features; ++i) {
        acc += input[s * layer.in_features + i] *
               layer.weights[std::size_t(j) * layer.in_features + i];
        ++mults;
      }
      out[s * layer.out_features + j] = acc;
    }
  }
  if (mult_counter) *mult_counter += mults;
  return out;
}

/// Trainable network built from a NetworkSpec. Forward caches what backward
/// needs; one instance must not be used from two threads at once.
template <typename T>
class Network {
 public:
  struct ConvLayer {
    std::vector<ConvBranch<T>> branches;
    bool pool_after = false;
  };

  Network(const NetworkSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    const auto stages = propagate_shapes(spec);
    for (std::size_t l = 0; l < spec.conv_layers.size(); ++l) {
      ConvLayer layer;
      layer.pool_after = spec.conv_layers[l].pool_after;
      for (const auto& b : spec.conv_layers[l].branches) {
        layer.branches.emplace_back(
            "conv" + std::to_string(l + 1) + "/" + shape_by_id(b.shape_id).label(),
            b.kernel_height, b.kernel_width, stages[l].channels, b.out_channels);
      }
      conv_.push_back(std::move(layer));
    }
    const auto& last = stages.back();
    flat_features_ = last.channels * last.height * last.width;
    hidden_ = Dense<T>("fc", flat_features_, spec.fc_width);
    classifier_ = Dense<T>("classifier", spec.fc_width, spec.num_classes);
    initialize(init_seed);
  }

  const NetworkSpec& spec() const { return spec_; }
  std::vector<ConvLayer>& conv_layers() { return conv_; }
  Dense<T>& hidden() { return hidden_; }
  Dense<T>& classifier() { return classifier_; }

  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Tensor<T>& w, double fan_in) {
      std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in),
                                                  std::sqrt(6.0 / fan_in));
      for (auto& v : w.data()) v = T(dist(rng));
    };
    for (auto& layer : conv_) {
      for (auto& b : layer.branches) {
        fill(b.weights, double(b.patch_size()));
        b.bias.fill(T{0});
      }
    }
    fill(hidden_.weights, hidden_.in_features);
    hidden_.bias.fill(T{0});
    fill(classifier_.weights, classifier_.in_features);
    classifier_.bias.fill(T{0});
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> params;
    for (auto& layer : conv_) {
      for (auto& b : layer.branches) {
        params.push_back(&b.weights);
        params.push_back(&b.bias);
      }
    }
    for (Dense<T>* d : {&hidden_, &classifier_}) {
      params.push_back(&d->weights);
      params.push_back(&d->bias);
    }
    return params;
  }

  /// Logits (N, classes) for a batch (N, C, H, W). With `keep_cache` the
  /// intermediate activations are retained for backward().
  Tensor<T> forward(const Tensor<T>& input, bool keep_cache = false) {
    check_input(input);
    cache_.clear();
    Tensor<T> x = input;
    for (auto& layer : conv_) {
      LayerCache c;
      std::vector<Tensor<T>> parts;
      parts.reserve(layer.branches.size());
      for (const auto& b : layer.branches) parts.push_back(conv2d_forward(x, b));
      Tensor<T> act = relu_forward(concat_channels(parts));
      if (keep_cache) c.input = std::move(x);
      if (layer.pool_after) {
        auto pooled = maxpool2x2(act);
        c.pre_pool_shape = act.shape();
        c.argmax = std::move(pooled.argmax);
        x = std::move(pooled.output);
      } else {
        x = act;
      }
      if (keep_cache) {
        c.activation = std::move(act);
        cache_.push_back(std::move(c));
      }
    }
    Tensor<T> hidden = relu_forward(dense_forward(x, hidden_));
    Tensor<T> logits = dense_forward(hidden, classifier_);
    if (keep_cache) {
      flat_input_ = std::move(x);
      hidden_out_ = std::move(hidden);
    }
    return logits;
  }

  /// Backpropagates d(loss)/d(logits) from the last cached forward pass,
  /// overwriting every parameter gradient. Returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& logit_grad) {
    if (cache_.size() != conv_.size()) {
      throw ComputeError("backward() called without a cached forward pass");
    }
    auto g_cls = dense_backward(hidden_out_, classifier_, logit_grad);
    store(classifier_.weights, g_cls.weights);
    store(classifier_.bias, g_cls.bias);
    auto g_hidden = dense_backward(flat_input_, hidden_,
                                   relu_backward(hidden_out_, g_cls.input));
    store(hidden_.weights, g_hidden.weights);
    store(hidden_.bias, g_hidden.bias);
    Tensor<T> grad = std::move(g_hidden.input);
    for (std::size_t l = conv_.size(); l-- > 0;) {
      auto& layer = conv_[l];
      auto& c = cache_[l];
      if (layer.pool_after) grad = maxpool2x2_backward(c.pre_pool_shape, c.argmax, grad);
      grad = relu_backward(c.activation, grad);
      std::vector<std::size_t> channels;
      for (const auto& b : layer.branches) channels.push_back(std::size_t(b.out_channels));
      auto pieces = split_grad(grad, std::span<const std::size_t>(channels));
      Tensor<T> input_grad(c.input.shape());
      for (std::size_t i = 0; i < layer.branches.size(); ++i) {
        auto& b = layer.branches[i];
        auto g = conv2d_backward(c.input, b, pieces[i]);
        store(b.weights, g.weights);
        store(b.bias, g.bias);
        auto dst = input_grad.data();
        auto src = g.input.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
      grad = std::move(input_grad);
    }
    return grad;
  }

  /// Runs the direct-loop conv and dense paths on a zero batch of one image and
  /// counts the multiplications they execute.
  MultCount count_forward_mults(InputShape input) const {
    if (input != spec_.input) {
      throw ShapeError("count_forward_mults: network built for a different input shape");
    }
    MultCount count;
    Tensor<T> x(Shape{1, std::size_t(input.channels), std::size_t(input.height),
                      std::size_t(input.width)});
    for (const auto& layer : conv_) {
      std::vector<Tensor<T>> parts;
      for (const auto& b : layer.branches) {
        parts.push_back(conv2d_forward_direct(x, b, &count.conv));
      }
      x = relu_forward(concat_channels(parts));
      if (layer.pool_after) x = maxpool2x2(x).output;
    }
    auto h = relu_forward(dense_forward_direct(x, hidden_, &count.fc_hidden));
    dense_forward_direct(h, classifier_, &count.classifier);
    return count;
  }

 private:
  struct LayerCache {
    Tensor<T> input;
    Tensor<T> activation;
    Shape pre_pool_shape;
    std::vector<std::uint32_t> argmax;
  };

  void check_input(const Tensor<T>& input) const {
    const auto& in = spec_.input;
    if (input.rank() != 4 || input.dim(1) != std::size_t(in.channels) ||
        input.dim(2) != std::size_t(in.height) || input.dim(3) != std::size_t(in.width)) {
      throw ShapeError("network input " + to_string(input.shape()) + " does not match (N, " +
                       std::to_string(in.channels) + ", " + std::to_string(in.height) +
                       ", " + std::to_string(in.width) + ")");
    }
  }

  static void store(Tensor<T>& param, const Tensor<T>& grad) {
    auto dst = param.grad();
    std::copy(grad.data().begin(), grad.data().end(), dst.begin());
  }

  NetworkSpec spec_;
  std::vector<ConvLayer> conv_;
  int flat_features_ = 0;
  Dense<T> hidden_;
  Dense<T> classifier_;
  std::vector<LayerCache> cache_;
  Tensor<T> flat_input_;
  Tensor<T> hidden_out_;
};

template <typename T>
MultCount count_forward_mults(const Network<T>& net, InputShape input) {
  return net.count_forward_mults(input);
}

}  // namespace kshape::nn
