#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "kshape/data.hpp"
#include "kshape/nn/adam.hpp"
#include "kshape/nn/loss.hpp"
#include "kshape/nn/network.hpp"

namespace kshape::nn {

/// Step schedule: base_lr until `drop_epoch` (0-based), then base_lr * factor.
/// A negative drop_epoch disables the drop.
struct LrSchedule {
  double base_lr = 1e-3;
  int drop_epoch = -1;
  double drop_factor = 0.1;

  double lr_at(int epoch) const {
    return (drop_epoch >= 0 && epoch >= drop_epoch) ? base_lr * drop_factor : base_lr;
  }
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  AdamConfig adam;
  LrSchedule schedule;
  bool augment = false;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t augment_seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::vector<double> epoch_lr;
};

/// Mini-batch Adam on softmax cross-entropy. Deterministic for fixed seeds
/// and a fixed initial network.
template <typename T>
TrainReport train(Network<T>& net, const data::Dataset& train_set, const TrainConfig& cfg) {
  TrainReport report;
  if (cfg.epochs <= 0) return report;
  if (train_set.empty()) throw ComputeError("train: empty training set");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  std::mt19937_64 shuffle_rng(cfg.shuffle_seed);
  std::mt19937_64 augment_rng(cfg.augment_seed);
  AdamState<T> state(cfg.adam);
  auto params = net.parameters();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<int> labels;
  const std::size_t image_size = train_set.image_size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      Tensor<T> batch = train_set.batch<T>(idx);
      if (cfg.augment) {
        std::vector<float> dst(image_size);
        for (std::size_t k = 0; k < count; ++k) {
          auto img = train_set.image(idx[k]);
          data::augment(img, std::span<float>(dst), train_set.shape,
                        data::draw_augment(augment_rng));
          std::copy(dst.begin(), dst.end(), batch.data().begin() + k * image_size);
        }
      }
      labels.assign(count, 0);
      for (std::size_t k = 0; k < count; ++k) labels[k] = train_set.labels[idx[k]];

      Tensor<T> logits = net.forward(batch, /*keep_cache=*/true);
      auto loss = softmax_cross_entropy_batch<T>(logits, labels);
      if (!std::isfinite(double(loss.loss))) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index),
                              epoch, batch_index);
      }
      net.backward(Tensor<T>(logits.shape(), std::move(loss.logit_grad)));
      try {
        adam_step(std::span<Tensor<T>* const>(params), state, lr);
      } catch (const ComputeError& e) {
        throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_index) + ")",
                              epoch, batch_index);
      }
      loss_sum += double(loss.loss) * double(count);
      seen += count;
    }
    report.epoch_loss.push_back(loss_sum / double(seen));
    report.epoch_lr.push_back(lr);
  }
  return report;
}

/// Index of the largest logit; ties resolve to the lowest class index.
template <typename T>
int argmax_class(std::span<const T> logits) {
  int best = 0;
  for (int j = 1; j < int(logits.size()); ++j) {
    if (logits[j] > logits[best]) best = j;
  }
  return best;
}

template <typename T>
double evaluate_top1(Network<T>& net, const data::Dataset& ds, int batch_size = 256) {
  if (ds.empty()) throw ComputeError("evaluate_top1: empty dataset");
  std::vector<std::size_t> idx;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, ds.size() - start);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), start);
    Tensor<T> logits = net.forward(ds.batch<T>(idx));
    const std::size_t classes = logits.size() / count;
    for (std::size_t k = 0; k < count; ++k) {
      auto row = std::span<const T>(logits.data()).subspan(k * classes, classes);
      correct += argmax_class(row) == int(ds.labels[start + k]);
    }
  }
  return double(correct) / double(ds.size());
}

}  // namespace kshape::nn
