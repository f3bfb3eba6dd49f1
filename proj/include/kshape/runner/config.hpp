#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kshape/error.hpp"
#include "kshape/evaluator.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"

namespace kshape::runner {

/// Fully resolved settings for one run. Built from a preset, then a JSON
/// config file, then command-line overrides.
struct RunConfig {
  std::string preset = "desk";
  std::string template_id = "lenet5";
  std::string dataset = "mnist";
  Mode mode = Mode::kTwoObjective;
  std::vector<int> slots;  // empty keeps the template's slot counts
  int fc_width = 0;        // 0 keeps the template's width

  int population = 25;
  int generations = 100;
  double mutation_rate = 0.1;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;
  bool inject_benchmark = false;
  bool tournament_parents = false;

  std::filesystem::path data_dir = "data/mnist";
  std::filesystem::path out_dir = "runs/latest";
  std::size_t search_train = 8000;
  std::size_t search_eval = 2000;
  int epochs = 3;
  int batch_size = 64;
  double lr = 1e-3;

  int retrain_epochs = 10;
  int retrain_lr_drop_epoch = 3;
  double retrain_lr_drop_factor = 0.1;
  double weight_decay = 1e-4;
  std::string augment = "auto";  // auto | on | off

  int workers = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline InputShape dataset_input(const std::string& dataset) {
  if (dataset == "mnist" || dataset == "fashion_mnist") return {1, 28, 28};
  if (dataset == "cifar10") return {3, 32, 32};
  throw ConfigError("unknown dataset '" + dataset +
                    "' (expected mnist, fashion_mnist or cifar10)");
}

/// Preset defaults for a dataset. "full" uses full dataset sizes and epochs,
/// "desk" shrinks the data and epochs.
inline RunConfig preset_config(const std::string& preset, const std::string& dataset) {
  dataset_input(dataset);
  RunConfig c;
  c.preset = preset;
  c.dataset = dataset;
  c.data_dir = dataset == "cifar10" ? "data/cifar-10-batches-bin" : "data/" + dataset;
  if (preset == "desk") {
    c.search_train = 8000;
    c.search_eval = 2000;
    c.epochs = 3;
    c.retrain_epochs = 10;
    c.retrain_lr_drop_epoch = 3;
  } else if (preset == "full") {
    c.search_train = dataset == "cifar10" ? 40000 : 50000;
    c.search_eval = 10000;
    c.epochs = 30;
    c.retrain_epochs = 100;
    c.retrain_lr_drop_epoch = 30;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or full)");
  }
  return c;
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{
      {"preset", c.preset},
      {"template", c.template_id},
      {"dataset", c.dataset},
      {"mode", mode_name(c.mode)},
      {"slots", c.slots},
      {"fc_width", c.fc_width},
      {"population", c.population},
      {"generations", c.generations},
      {"mutation_rate", c.mutation_rate},
      {"seed", c.seed},
      {"split_seed", c.split_seed},
      {"inject_benchmark", c.inject_benchmark},
      {"tournament_parents", c.tournament_parents},
      {"data_dir", c.data_dir.string()},
      {"out_dir", c.out_dir.string()},
      {"search_train", c.search_train},
      {"search_eval", c.search_eval},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"retrain_epochs", c.retrain_epochs},
      {"retrain_lr_drop_epoch", c.retrain_lr_drop_epoch},
      {"retrain_lr_drop_factor", c.retrain_lr_drop_factor},
      {"weight_decay", c.weight_decay},
      {"augment", c.augment},
      {"workers", c.workers},
  };
}

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " +
                      j.at(key).dump());
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `c`. Unknown keys are errors.
inline void apply_overrides(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known = [] {
    std::vector<std::string> keys;
    const nlohmann::json defaults = RunConfig{};
    for (const auto& [k, v] : defaults.items()) keys.push_back(k);
    return keys;
  }();
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  detail::take(j, "preset", c.preset);
  detail::take(j, "template", c.template_id);
  detail::take(j, "dataset", c.dataset);
  if (j.contains("mode")) {
    std::string m;
    detail::take(j, "mode", m);
    c.mode = parse_mode(m);
  }
  detail::take(j, "slots", c.slots);
  detail::take(j, "fc_width", c.fc_width);
  detail::take(j, "population", c.population);
  detail::take(j, "generations", c.generations);
  detail::take(j, "mutation_rate", c.mutation_rate);
  detail::take(j, "seed", c.seed);
  detail::take(j, "split_seed", c.split_seed);
  detail::take(j, "inject_benchmark", c.inject_benchmark);
  detail::take(j, "tournament_parents", c.tournament_parents);
  if (j.contains("data_dir")) {
    std::string p;
    detail::take(j, "data_dir", p);
    c.data_dir = p;
  }
  if (j.contains("out_dir")) {
    std::string p;
    detail::take(j, "out_dir", p);
    c.out_dir = p;
  }
  detail::take(j, "search_train", c.search_train);
  detail::take(j, "search_eval", c.search_eval);
  detail::take(j, "epochs", c.epochs);
  detail::take(j, "batch_size", c.batch_size);
  detail::take(j, "lr", c.lr);
  detail::take(j, "retrain_epochs", c.retrain_epochs);
  detail::take(j, "retrain_lr_drop_epoch", c.retrain_lr_drop_epoch);
  detail::take(j, "retrain_lr_drop_factor", c.retrain_lr_drop_factor);
  detail::take(j, "weight_decay", c.weight_decay);
  detail::take(j, "augment", c.augment);
  detail::take(j, "workers", c.workers);
}

inline void validate(const RunConfig& c) {
  const auto input = dataset_input(c.dataset);
  const auto base = template_by_id(c.template_id, input);
  if (!c.slots.empty()) {
    if (c.slots.size() != base.slots.size()) {
      throw ConfigError("slots override has " + std::to_string(c.slots.size()) +
                        " layers, template '" + c.template_id + "' has " +
                        std::to_string(base.slots.size()));
    }
    for (int s : c.slots) {
      if (s < 1) throw ConfigError("slot counts must be >= 1");
    }
  }
  if (c.fc_width < 0) throw ConfigError("fc_width must be >= 0");
  if (c.population < 1) throw ConfigError("population must be >= 1");
  if (c.generations < 0) throw ConfigError("generations must be >= 0");
  if (!(c.mutation_rate >= 0.0 && c.mutation_rate <= 1.0)) {
    throw ConfigError("mutation_rate must lie in [0, 1]");
  }
  if (c.search_eval == 0) throw ConfigError("search_eval must be > 0");
  if (c.epochs < 0 || c.retrain_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (c.epochs > 0 && c.search_train == 0) throw ConfigError("search_train must be > 0");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(c.retrain_lr_drop_factor > 0.0)) throw ConfigError("retrain_lr_drop_factor must be > 0");
  if (c.augment != "auto" && c.augment != "on" && c.augment != "off") {
    throw ConfigError("augment must be auto, on or off");
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.preset != "desk" && c.preset != "full") {
    throw ConfigError("unknown preset '" + c.preset + "' (expected desk or full)");
  }
}

/// Preset chosen by `layers` (last one wins), then every layer applied in
/// order, then validation.
inline RunConfig resolve_config(const std::vector<nlohmann::json>& layers) {
  std::string preset = "desk", dataset = "mnist";
  for (const auto& j : layers) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::take(j, "preset", preset);
    detail::take(j, "dataset", dataset);
  }
  RunConfig c = preset_config(preset, dataset);
  for (const auto& j : layers) apply_overrides(c, j);
  validate(c);
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline NetworkTemplate make_template(const RunConfig& c) {
  auto t = template_by_id(c.template_id, dataset_input(c.dataset));
  if (!c.slots.empty()) t.slots = c.slots;
  if (c.fc_width > 0) t.fc_width = c.fc_width;
  return t;
}

inline moea::EvolveConfig evolve_config(const RunConfig& c) {
  moea::EvolveConfig e;
  e.population = c.population;
  e.generations = c.generations;
  e.mutation_rate = c.mutation_rate;
  e.seed = c.seed;
  e.inject_benchmark = c.inject_benchmark;
  e.tournament_parents = c.tournament_parents;
  e.workers = c.workers;
  return e;
}

inline EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e;
  e.epochs = c.epochs;
  e.batch_size = c.batch_size;
  e.lr = c.lr;
  e.seed = c.seed;
  return e;
}

inline RetrainConfig retrain_config(const RunConfig& c) {
  RetrainConfig r;
  r.epochs = c.retrain_epochs;
  r.batch_size = c.batch_size;
  r.lr = c.lr;
  r.weight_decay = c.weight_decay;
  r.lr_drop_epoch = c.retrain_lr_drop_epoch;
  r.lr_drop_factor = c.retrain_lr_drop_factor;
  r.augment = c.augment == "on" || (c.augment == "auto" && c.dataset == "cifar10");
  r.seed = c.seed;
  return r;
}

/// Settings that change results; a resumed run must agree on all of them.
inline nlohmann::json result_defining(const RunConfig& c) {
  nlohmann::json j = c;
  for (const char* k : {"out_dir", "workers", "generations", "data_dir", "retrain_epochs",
                        "retrain_lr_drop_epoch", "retrain_lr_drop_factor", "weight_decay",
                        "augment"}) {
    j.erase(k);
  }
  return j;
}

}  // namespace kshape::runner
