#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "kshape/error.hpp"
#include "kshape/genotype.hpp"

namespace kshape::moea {

/// Objective values, all minimised: (conv mults, top-1 error[, kernel count]).
struct FitnessVector {
  std::vector<double> objectives;

  std::size_t size() const { return objectives.size(); }
  double operator[](std::size_t i) const { return objectives[i]; }
  double& operator[](std::size_t i) { return objectives[i]; }

  friend bool operator==(const FitnessVector&, const FitnessVector&) = default;
  friend auto operator<=>(const FitnessVector&, const FitnessVector&) = default;
};

struct Individual {
  Genotype genotype;
  std::optional<FitnessVector> fitness;
  std::optional<int> rank;         // 0 = non-dominated front
  std::optional<double> crowding;  // may be +inf
};

/// a dominates b: no worse in every objective and strictly better in one.
inline bool dominates(const FitnessVector& a, const FitnessVector& b) {
  if (a.size() != b.size()) {
    throw ComputeError("dominates: fitness vectors of length " + std::to_string(a.size()) +
                       " and " + std::to_string(b.size()));
  }
  bool strictly_better = false;
  for (std::size_t m = 0; m < a.size(); ++m) {
    if (a[m] > b[m]) return false;
    strictly_better |= a[m] < b[m];
  }
  return strictly_better;
}

using Fronts = std::vector<std::vector<std::size_t>>;

/// Deb's O(M N^2) non-dominated sort. Returns fronts of indices into `pop`,
/// each listed in ascending index order.
inline Fronts fast_nondominated_sort(std::span<const FitnessVector> pop) {
  const std::size_t n = pop.size();
  std::vector<std::vector<std::size_t>> dominated_by_me(n);
  std::vector<int> domination_count(n, 0);
  Fronts fronts;
  if (n == 0) return fronts;
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(pop[p], pop[q])) {
        dominated_by_me[p].push_back(q);
      } else if (dominates(pop[q], pop[p])) {
        ++domination_count[p];
      }
    }
    if (domination_count[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (auto p : current) {
      for (auto q : dominated_by_me[p]) {
        if (--domination_count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

/// Ranks every individual in place; throws if one has no fitness.
inline Fronts assign_ranks(std::vector<Individual>& pop) {
  std::vector<FitnessVector> fits;
  fits.reserve(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!pop[i].fitness) {
      throw ComputeError("fast_nondominated_sort: individual " + std::to_string(i) +
                         " has not been evaluated");
    }
    fits.push_back(*pop[i].fitness);
  }
  auto fronts = fast_nondominated_sort(fits);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    for (auto i : fronts[f]) pop[i].rank = int(f);
  }
  return fronts;
}

/// Crowding distance of each member of one front. Members attaining an
/// objective's minimum or maximum get +inf; others accumulate the normalised
/// gap between their sorted neighbours. Objectives with zero range add 0.
inline std::vector<double> crowding_distance(std::span<const FitnessVector> front) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t n = front.size();
  std::vector<double> dist(n, 0.0);
  if (n <= 2) {
    std::fill(dist.begin(), dist.end(), kInf);
    return dist;
  }
  const std::size_t objectives = front[0].size();
  std::vector<std::size_t> order(n);
  for (std::size_t m = 0; m < objectives; ++m) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (front[a][m] != front[b][m]) return front[a][m] < front[b][m];
      return front[a] < front[b];
    });
    const double lo = front[order.front()][m];
    const double hi = front[order.back()][m];
    const double range = hi - lo;
    if (range <= 0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      if (front[i][m] == lo || front[i][m] == hi) {
        dist[i] = kInf;
      } else if (dist[i] != kInf) {
        dist[i] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / range;
      }
    }
  }
  return dist;
}

/// Elitist truncation: whole fronts in rank order, then the straddling front
/// by descending crowding distance (stable in pool order). Returns pool
/// indices of the survivors together with their rank and crowding.
struct Selection {
  std::vector<std::size_t> indices;
  std::vector<int> ranks;
  std::vector<double> crowding;
};

inline Selection select_survivors(std::span<const FitnessVector> pool, std::size_t mu) {
  if (pool.size() < mu) {
    throw ComputeError("select_survivors: pool of " + std::to_string(pool.size()) +
                       " cannot supply " + std::to_string(mu) + " survivors");
  }
  Selection sel;
  const auto fronts = fast_nondominated_sort(pool);
  for (std::size_t f = 0; f < fronts.size() && sel.indices.size() < mu; ++f) {
    std::vector<FitnessVector> members;
    for (auto i : fronts[f]) members.push_back(pool[i]);
    const auto crowd = crowding_distance(members);
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t room = mu - sel.indices.size();
    if (members.size() > room) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return crowd[a] > crowd[b]; });
      order.resize(room);
    }
    for (auto k : order) {
      sel.indices.push_back(fronts[f][k]);
      sel.ranks.push_back(int(f));
      sel.crowding.push_back(crowd[k]);
    }
  }
  return sel;
}

/// Crowded-comparison binary tournament: lower rank wins, then larger
/// crowding, then the first contestant.
template <typename Rng>
std::size_t crowded_tournament(const std::vector<Individual>& pop, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  const std::size_t a = pick(rng), b = pick(rng);
  const auto& x = pop[a];
  const auto& y = pop[b];
  if (x.rank.value_or(0) != y.rank.value_or(0)) {
    return x.rank.value_or(0) < y.rank.value_or(0) ? a : b;
  }
  return y.crowding.value_or(0) > x.crowding.value_or(0) ? b : a;
}

namespace detail {

inline double hv_recursive(std::vector<std::vector<double>> pts, const std::vector<double>& ref,
                           std::size_t dims) {
  if (pts.empty()) return 0.0;
  if (dims == 1) {
    double best = ref[0];
    for (const auto& p : pts) best = std::min(best, p[0]);
    return ref[0] - best;
  }
  const std::size_t last = dims - 1;
  std::sort(pts.begin(), pts.end(),
            [last](const auto& a, const auto& b) { return a[last] < b[last]; });
  double volume = 0.0;
  std::vector<std::vector<double>> slice;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    slice.push_back(pts[i]);
    const double upper = i + 1 < pts.size() ? pts[i + 1][last] : ref[last];
    const double depth = upper - pts[i][last];
    if (depth > 0) volume += depth * hv_recursive(slice, ref, last);
  }
  return volume;
}

}  // namespace detail

/// Exact dominated hypervolume w.r.t. `ref` by dimension sweeping. Points not
/// strictly better than `ref` in every objective contribute nothing.
inline double hypervolume(std::span<const FitnessVector> points, const FitnessVector& ref) {
  std::vector<std::vector<double>> pts;
  for (const auto& p : points) {
    bool inside = p.size() == ref.size();
    for (std::size_t m = 0; inside && m < p.size(); ++m) inside = p[m] < ref[m];
    if (inside) pts.push_back(p.objectives);
  }
  return detail::hv_recursive(std::move(pts), ref.objectives, ref.size());
}

}  // namespace kshape::moea
