#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "kshape/cost_model.hpp"
#include "kshape/data.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"
#include "kshape/nn/train.hpp"

namespace kshape {

/// Search-phase training settings.
struct EvalConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

/// splitmix64 finaliser.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for one genotype, independent of evaluation order.
inline std::uint64_t genotype_seed(std::uint64_t global_seed, const std::string& key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(global_seed ^ mix64(h));
}

struct CacheEntry {
  moea::FitnessVector fitness;
  double accuracy = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string timestamp;
  bool failed = false;
  std::string error;
};

/// canonical_key -> fitness. Concurrent callers asking for the same key wait
/// for the first one's result instead of training twice.
class FitnessCache {
 public:
  /// Returns the entry for `key`, running `compute` only if nobody has.
  template <typename Fn>
  CacheEntry get_or_compute(const std::string& key, Fn&& compute) {
    std::shared_future<CacheEntry> fut;
    std::promise<CacheEntry> promise;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        fut = promise.get_future().share();
        entries_.emplace(key, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(compute());
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mutex_);
        entries_.erase(key);
        throw;
      }
    }
    return fut.get();
  }

  /// Seeds the cache, e.g. from a checkpoint. Existing entries win.
  void insert(const std::string& key, CacheEntry entry) {
    std::lock_guard lock(mutex_);
    if (entries_.count(key)) return;
    std::promise<CacheEntry> p;
    p.set_value(std::move(entry));
    entries_.emplace(key, p.get_future().share());
  }

  bool contains(const std::string& key) const {
    std::lock_guard lock(mutex_);
    return entries_.count(key) != 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<CacheEntry>> entries_;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Genotype -> (conv mults, top-1 error[, kernel count]): decode, train on
/// the search split, score on the evaluation split.
class Evaluator {
 public:
  Evaluator(NetworkTemplate tmpl, Mode mode, data::Dataset train_set, data::Dataset eval_set,
            EvalConfig cfg, std::filesystem::path log_path = {})
      : tmpl_(std::move(tmpl)),
        mode_(mode),
        train_(std::move(train_set)),
        eval_(std::move(eval_set)),
        cfg_(cfg),
        log_path_(std::move(log_path)),
        worst_(moea::worst_case_fitness(tmpl_, mode_)) {
    if (cfg_.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (eval_.empty()) throw ConfigError("evaluation split is empty");
    if (cfg_.epochs > 0 && train_.empty()) throw ConfigError("training split is empty");
  }

  moea::FitnessVector evaluate(const Genotype& g) { return evaluate_entry(g).fitness; }

  CacheEntry evaluate_entry(const Genotype& g) {
    validate(g, tmpl_);
    const auto key = canonical_key(g);
    return cache_.get_or_compute(key, [&] { return train_and_score(g, key); });
  }

  moea::FitnessVector operator()(const Genotype& g) { return evaluate(g); }

  /// Number of networks actually trained (cache misses).
  std::size_t trainings() const { return trainings_; }
  FitnessCache& cache() { return cache_; }
  const NetworkTemplate& network_template() const { return tmpl_; }

 private:
  moea::FitnessVector objectives(const Genotype& g, double error) const {
    const auto cost = network_cost(decode(g, tmpl_));
    moea::FitnessVector f{{double(cost.total_conv_mults), error}};
    if (mode_ == Mode::kThreeObjective) f.objectives.push_back(double(active_kernels(g)));
    return f;
  }

  CacheEntry train_and_score(const Genotype& g, const std::string& key) {
    const auto start = std::chrono::steady_clock::now();
    CacheEntry e;
    e.epochs = cfg_.epochs;
    e.seed = genotype_seed(cfg_.seed, key);
    e.timestamp = utc_timestamp();
    try {
      nn::Network<float> net(decode(g, tmpl_), e.seed);
      nn::TrainConfig tc;
      tc.epochs = cfg_.epochs;
      tc.batch_size = cfg_.batch_size;
      tc.adam.lr = cfg_.lr;
      tc.schedule.base_lr = cfg_.lr;
      tc.shuffle_seed = mix64(e.seed + 1);
      tc.augment = false;
      nn::train(net, train_, tc);
      e.accuracy = nn::evaluate_top1(net, eval_);
      e.fitness = objectives(g, 1.0 - e.accuracy);
    } catch (const DivergenceError& err) {
      e.failed = true;
      e.error = err.what();
      e.fitness = worst_;
    }
    e.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++trainings_;
    log(key, g, e);
    return e;
  }

  void log(const std::string& key, const Genotype& g, const CacheEntry& e) {
    if (log_path_.empty()) return;
    nlohmann::json rec{{"key", key},           {"genotype", g},
                       {"fitness", e.fitness}, {"accuracy", e.accuracy},
                       {"epochs", e.epochs},   {"seed", e.seed},
                       {"batch_size", cfg_.batch_size},
                       {"wall_time_s", e.wall_seconds},
                       {"timestamp", e.timestamp},
                       {"failed", e.failed},   {"error", e.error}};
    std::lock_guard lock(log_mutex_);
    std::ofstream out(log_path_, std::ios::app);
    if (!out) throw DataError("cannot append to evaluation log " + log_path_.string());
    out << rec.dump() << '\n';
  }

  NetworkTemplate tmpl_;
  Mode mode_;
  data::Dataset train_;
  data::Dataset eval_;
  EvalConfig cfg_;
  std::filesystem::path log_path_;
  moea::FitnessVector worst_;
  FitnessCache cache_;
  std::atomic<std::size_t> trainings_{0};
  std::mutex log_mutex_;
};

/// Final training of a selected architecture.
struct RetrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int lr_drop_epoch = 30;
  double lr_drop_factor = 0.1;
  bool augment = true;
  std::uint64_t seed = 1;
};

struct RetrainResult {
  double test_accuracy = 0.0;
  CostReport cost;
  nn::TrainReport report;
};

inline RetrainResult retrain_reference(const Genotype& g, const NetworkTemplate& tmpl,
                                       const data::Dataset& train_set,
                                       const data::Dataset& test_set, const RetrainConfig& cfg) {
  validate(g, tmpl);
  const auto spec = decode(g, tmpl);
  const auto seed = genotype_seed(cfg.seed, canonical_key(g));
  nn::Network<float> net(spec, seed);
  nn::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.adam.lr = cfg.lr;
  tc.adam.weight_decay = cfg.weight_decay;
  tc.schedule = {cfg.lr, cfg.lr_drop_epoch, cfg.lr_drop_factor};
  tc.augment = cfg.augment;
  tc.shuffle_seed = mix64(seed + 1);
  tc.augment_seed = mix64(seed + 2);
  RetrainResult r;
  r.report = nn::train(net, train_set, tc);
  r.test_accuracy = nn::evaluate_top1(net, test_set);
  r.cost = network_cost(spec);
  return r;
}

}  // namespace kshape
