#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kshape/error.hpp"
#include "kshape/moea/nsga2.hpp"

namespace kshape::runner {

struct ReferencePick {
  std::size_t index = 0;  // position in the front
  std::string rationale;
};

struct ReferencePoints {
  ReferencePick ref1, ref2, ref3;
};

/// Ref 1: lowest error, ties to fewer mults.
/// Ref 2: lowest error among members with mults <= ref1.mults / 2, else the
///        median-mults member.
/// Ref 3: closest to the ideal point once every objective is min-max scaled
///        over the front.
/// Objective 0 is mults, objective 1 is top-1 error. Remaining ties go to the
/// lower index.
inline ReferencePoints select_reference_points(std::span<const moea::FitnessVector> front) {
  if (front.empty()) throw ConfigError("select_reference_points: empty front");
  const std::size_t n = front.size();
  const std::size_t m = front[0].size();
  auto better_error = [&](std::size_t a, std::size_t b) {
    if (front[a][1] != front[b][1]) return front[a][1] < front[b][1];
    if (front[a][0] != front[b][0]) return front[a][0] < front[b][0];
    return a < b;
  };

  ReferencePoints r;
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (better_error(i, best)) best = i;
  }
  r.ref1 = {best, "min_error"};

  const double limit = front[best][0] / 2.0;
  std::optional<std::size_t> cheap;
  for (std::size_t i = 0; i < n; ++i) {
    if (front[i][0] <= limit && (!cheap || better_error(i, *cheap))) cheap = i;
  }
  if (cheap) {
    r.ref2 = {*cheap, "min_error_at_half_ref1_mults"};
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return front[a][0] < front[b][0]; });
    r.ref2 = {order[(n - 1) / 2], "median_mults_fallback"};
  }

  std::vector<double> lo(m, std::numeric_limits<double>::infinity());
  std::vector<double> hi(m, -std::numeric_limits<double>::infinity());
  for (const auto& f : front) {
    for (std::size_t k = 0; k < m; ++k) {
      lo[k] = std::min(lo[k], f[k]);
      hi[k] = std::max(hi[k], f[k]);
    }
  }
  std::size_t closest = 0;
  double closest_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double range = hi[k] - lo[k];
      const double x = range > 0 ? (front[i][k] - lo[k]) / range : 0.0;
      d += x * x;
    }
    if (d < closest_d) {
      closest_d = d;
      closest = i;
    }
  }
  r.ref3 = {closest, "closest_to_ideal_normalized"};
  return r;
}

}  // namespace kshape::runner
