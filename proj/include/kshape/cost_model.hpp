#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

#include "kshape/network_spec.hpp"

namespace kshape {

/// Multiplications for one mixed-kernel conv layer:
/// out_h * out_w * in_channels * sum over branches of (kernels * kh * kw).
/// For a single square branch this is O_h*O_w*O_c*K_h*K_w*K_c with K_c taken
/// as the input channel count.
inline std::uint64_t conv_layer_mults(std::uint64_t out_h, std::uint64_t out_w,
                                      std::uint64_t in_channels,
                                      std::span<const BranchSpec> branches) {
  std::uint64_t per_position = 0;
  for (const auto& b : branches) {
    per_position += std::uint64_t(b.out_channels) * b.kernel_height * b.kernel_width;
  }
  return out_h * out_w * in_channels * per_position;
}

inline std::uint64_t fc_mults(std::uint64_t out_h, std::uint64_t out_w, std::uint64_t out_c,
                              std::uint64_t neurons) {
  return out_h * out_w * out_c * neurons;
}

struct CostReport {
  std::vector<std::uint64_t> per_layer_mults;
  std::uint64_t total_conv_mults = 0;
  std::uint64_t fc_mults = 0;  // hidden FC layer; not part of the objective
  std::uint64_t kernel_count = 0;

  friend bool operator==(const CostReport&, const CostReport&) = default;
};

inline CostReport network_cost(const NetworkSpec& spec) {
  const auto stages = propagate_shapes(spec);
  CostReport r;
  for (std::size_t i = 0; i < spec.conv_layers.size(); ++i) {
    const auto& layer = spec.conv_layers[i];
    // same padding: conv output keeps the stage input's resolution
    const auto& in = stages[i];
    const auto m = conv_layer_mults(in.height, in.width, in.channels, layer.branches);
    r.per_layer_mults.push_back(m);
    r.total_conv_mults += m;
    r.kernel_count += layer.out_channels();
  }
  const auto& last = stages.back();
  r.fc_mults = fc_mults(last.height, last.width, last.channels, spec.fc_width);
  return r;
}

inline CostReport network_cost(NetworkSpec spec, InputShape input) {
  spec.input = input;
  return network_cost(spec);
}

inline void to_json(nlohmann::json& j, const CostReport& r) {
  j = nlohmann::json{{"per_layer_mults", r.per_layer_mults},
                     {"total_conv_mults", r.total_conv_mults},
                     {"fc_mults", r.fc_mults},
                     {"kernel_count", r.kernel_count}};
}

inline void from_json(const nlohmann::json& j, CostReport& r) {
  j.at("per_layer_mults").get_to(r.per_layer_mults);
  j.at("total_conv_mults").get_to(r.total_conv_mults);
  j.at("fc_mults").get_to(r.fc_mults);
  j.at("kernel_count").get_to(r.kernel_count);
}

}  // namespace kshape
