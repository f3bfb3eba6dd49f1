#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kshape/error.hpp"
#include "kshape/network_spec.hpp"

namespace kshape {

struct KernelShape {
  int id;
  int height;
  int width;

  int area() const { return height * width; }
  std::string label() const { return std::to_string(height) + "x" + std::to_string(width); }
};

inline constexpr int kNumShapes = 9;
inline constexpr std::uint8_t kRemoved = 0;

/// The nine kernel shapes, id order fixed.
inline const std::array<KernelShape, kNumShapes>& catalogue() {
  static const std::array<KernelShape, kNumShapes> shapes{{
      {1, 1, 1},
      {2, 1, 3},
      {3, 3, 1},
      {4, 3, 3},
      {5, 1, 5},
      {6, 5, 1},
      {7, 3, 5},
      {8, 5, 3},
      {9, 5, 5},
  }};
  return shapes;
}

inline const KernelShape& shape_by_id(int id) {
  if (id < 1 || id > kNumShapes) {
    throw ConfigError("kernel shape id " + std::to_string(id) + " outside 1..9");
  }
  return catalogue()[id - 1];
}

/// Accepts labels such as "5x5" or "1x3".
inline const KernelShape& shape_by_label(std::string_view label) {
  for (const auto& s : catalogue()) {
    if (s.label() == label) return s;
  }
  throw ConfigError("unknown kernel shape '" + std::string(label) + "'");
}

enum class Mode { kTwoObjective, kThreeObjective };

inline std::string_view mode_name(Mode m) {
  return m == Mode::kTwoObjective ? "two_obj" : "three_obj";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "two_obj") return Mode::kTwoObjective;
  if (s == "three_obj") return Mode::kThreeObjective;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected two_obj or three_obj)");
}

inline int objective_count(Mode m) { return m == Mode::kTwoObjective ? 2 : 3; }

/// Conventional network whose kernels are being replaced.
struct NetworkTemplate {
  std::string id;
  InputShape input;
  std::vector<int> slots;        // kernels per conv layer
  std::vector<bool> pool_after;  // per conv layer
  int fc_width = 512;
  int num_classes = 10;
  int original_shape_id = 9;     // square kernel used by the unmodified network
};

/// LeNet-5 style benchmark: 32 and 64 kernels, pooling after each, FC 512.
inline NetworkTemplate lenet5_template(InputShape input) {
  return {"lenet5", input, {32, 64}, {true, true}, 512, 10, 9};
}

/// Three layers of 64 kernels, pooling after each.
inline NetworkTemplate three_layer_template(InputShape input) {
  return {"three_layer", input, {64, 64, 64}, {true, true, true}, 512, 10, 4};
}

/// Four layers of 64 kernels, pooling after layers 1, 2 and 4.
inline NetworkTemplate four_layer_template(InputShape input) {
  return {"four_layer", input, {64, 64, 64, 64}, {true, true, false, true}, 512, 10, 4};
}

inline NetworkTemplate template_by_id(std::string_view id, InputShape input) {
  if (id == "lenet5") return lenet5_template(input);
  if (id == "three_layer") return three_layer_template(input);
  if (id == "four_layer") return four_layer_template(input);
  throw ConfigError("unknown template '" + std::string(id) +
                    "' (expected lenet5, three_layer or four_layer)");
}

/// Per-layer kernel slot assignments. Allele 0 marks a removed kernel.
struct Genotype {
  Mode mode = Mode::kTwoObjective;
  std::vector<std::vector<std::uint8_t>> layers;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Throws ConfigError when `g` does not fit `tmpl` or breaks its mode's rules.
inline void validate(const Genotype& g, const NetworkTemplate& tmpl) {
  if (g.layers.size() != tmpl.slots.size()) {
    throw ConfigError("genotype has " + std::to_string(g.layers.size()) +
                      " layers, template '" + tmpl.id + "' has " +
                      std::to_string(tmpl.slots.size()));
  }
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto& layer = g.layers[l];
    if (layer.size() != std::size_t(tmpl.slots[l])) {
      throw ConfigError("genotype layer " + std::to_string(l + 1) + " has " +
                        std::to_string(layer.size()) + " slots, expected " +
                        std::to_string(tmpl.slots[l]));
    }
    int active = 0;
    for (auto a : layer) {
      if (a > kNumShapes) {
        throw ConfigError("allele " + std::to_string(a) + " outside 0..9 in layer " +
                          std::to_string(l + 1));
      }
      if (a == kRemoved && g.mode == Mode::kTwoObjective) {
        throw ConfigError("two-objective genotype contains a removed kernel in layer " +
                          std::to_string(l + 1));
      }
      active += a != kRemoved;
    }
    if (active == 0) {
      throw ConfigError("genotype layer " + std::to_string(l + 1) + " has no kernels");
    }
  }
}

/// Every slot set to one shape, e.g. the unmodified benchmark.
inline Genotype uniform_genotype(const NetworkTemplate& tmpl, int shape_id,
                                 Mode mode = Mode::kTwoObjective) {
  shape_by_id(shape_id);
  Genotype g{mode, {}};
  for (int n : tmpl.slots) g.layers.emplace_back(n, std::uint8_t(shape_id));
  return g;
}

inline Genotype benchmark_genotype(const NetworkTemplate& tmpl, Mode mode) {
  return uniform_genotype(tmpl, tmpl.original_shape_id, mode);
}

/// Fully populated genotype with i.i.d. uniform shapes.
template <typename Rng>
Genotype random_genotype(const NetworkTemplate& tmpl, Mode mode, Rng& rng) {
  std::uniform_int_distribution<int> shape(1, kNumShapes);
  Genotype g{mode, {}};
  for (int n : tmpl.slots) {
    auto& layer = g.layers.emplace_back(n);
    for (auto& a : layer) a = std::uint8_t(shape(rng));
  }
  return g;
}

/// Each gene changes with probability `rate` to a different value drawn
/// uniformly from the mode's domain (1..9, or 0..9 with removal). A layer
/// left with no kernels gets one random slot refilled from 1..9.
template <typename Rng>
Genotype mutate(const Genotype& parent, double rate, Rng& rng) {
  Genotype child = parent;
  const int lowest = child.mode == Mode::kThreeObjective ? 0 : 1;
  const int domain = kNumShapes - lowest + 1;
  std::bernoulli_distribution flip(rate);
  std::uniform_int_distribution<int> other(0, domain - 2);
  std::uniform_int_distribution<int> shape(1, kNumShapes);
  for (auto& layer : child.layers) {
    bool any_active = false;
    for (auto& a : layer) {
      if (flip(rng)) {
        int v = lowest + other(rng);
        if (v >= a) ++v;  // skip the current value
        a = std::uint8_t(v);
      }
      any_active |= a != kRemoved;
    }
    if (!any_active) {
      std::uniform_int_distribution<std::size_t> slot(0, layer.size() - 1);
      layer[slot(rng)] = std::uint8_t(shape(rng));
    }
  }
  return child;
}

/// Kernels per shape id (index 0 counts removed slots).
inline std::array<int, kNumShapes + 1> shape_counts(const std::vector<std::uint8_t>& layer) {
  std::array<int, kNumShapes + 1> counts{};
  for (auto a : layer) ++counts.at(a);
  return counts;
}

inline int active_kernels(const Genotype& g) {
  int n = 0;
  for (const auto& layer : g.layers) {
    for (auto a : layer) n += a != kRemoved;
  }
  return n;
}

/// Groups each layer's alleles into same-shape branches ordered by shape id.
inline NetworkSpec decode(const Genotype& g, const NetworkTemplate& tmpl) {
  if (g.layers.size() != tmpl.slots.size()) {
    throw ConfigError("genotype layer count does not match template '" + tmpl.id + "'");
  }
  NetworkSpec spec{tmpl.input, {}, tmpl.fc_width, tmpl.num_classes};
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto counts = shape_counts(g.layers[l]);
    ConvLayerSpec layer{{}, bool(tmpl.pool_after[l])};
    for (int id = 1; id <= kNumShapes; ++id) {
      if (counts[id] == 0) continue;
      const auto& s = shape_by_id(id);
      layer.branches.push_back({id, s.height, s.width, counts[id]});
    }
    if (layer.branches.empty()) {
      throw ComputeError("invariant violated: genotype layer " + std::to_string(l + 1) +
                         " has every kernel removed");
    }
    spec.conv_layers.push_back(std::move(layer));
  }
  return spec;
}

/// Cache key that depends only on each layer's shape multiset.
inline std::string canonical_key(const Genotype& g) {
  std::string key;
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    if (l) key += '|';
    const auto counts = shape_counts(g.layers[l]);
    for (int id = 1; id <= kNumShapes; ++id) {
      if (id > 1) key += ',';
      key += std::to_string(counts[id]);
    }
  }
  return key;
}

inline void to_json(nlohmann::json& j, const Genotype& g) {
  j = nlohmann::json{{"mode", mode_name(g.mode)}, {"layers", g.layers}};
}

inline void from_json(const nlohmann::json& j, Genotype& g) {
  try {
    g.mode = parse_mode(j.at("mode").get<std::string>());
    const auto raw = j.at("layers").get<std::vector<std::vector<int>>>();
    g.layers.clear();
    for (const auto& layer : raw) {
      auto& out = g.layers.emplace_back();
      for (int a : layer) {
        if (a < 0 || a > kNumShapes) {
          throw ConfigError("allele " + std::to_string(a) + " outside 0..9");
        }
        out.push_back(std::uint8_t(a));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed genotype JSON: ") + e.what());
  }
}

}  // namespace kshape
