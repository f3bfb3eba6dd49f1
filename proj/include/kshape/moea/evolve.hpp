#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "kshape/cost_model.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/nsga2.hpp"

namespace kshape::moea {

struct EvolveConfig {
  int population = 25;
  int generations = 100;
  double mutation_rate = 0.1;
  std::uint64_t seed = 1;
  bool inject_benchmark = false;    // put the unmodified network in generation 0
  bool tournament_parents = false;  // crowded tournament instead of mutating every parent
  int workers = 1;
};

/// Fitness assigned when an evaluation throws: twice the all-5x5 conv cost,
/// error 1 and every slot in use.
inline FitnessVector worst_case_fitness(const NetworkTemplate& tmpl, Mode mode) {
  const auto spec = decode(uniform_genotype(tmpl, 9), tmpl);
  const double mults = 2.0 * double(network_cost(spec).total_conv_mults);
  FitnessVector f{{mults, 1.0}};
  if (mode == Mode::kThreeObjective) {
    int slots = 0;
    for (int s : tmpl.slots) slots += s;
    f.objectives.push_back(double(slots));
  }
  return f;
}

struct EvaluationRecord {
  std::string key;
  Genotype genotype;
  FitnessVector fitness;
  bool failed = false;
  std::string error;
};

/// Everything needed to continue a run exactly where it stopped.
struct EvolveState {
  int generation = 0;  // completed post-initialisation generations
  std::string rng_state;
  std::vector<Individual> population;
  std::vector<Individual> archive;
  std::vector<EvaluationRecord> evaluated;  // evaluation order, one per canonical key
};

using FitnessFunction = std::function<FitnessVector(const Genotype&)>;

struct EvolveHooks {
  /// Called after each completed generation; return false to stop early.
  std::function<bool(const EvolveState&)> on_generation;
  std::function<void(const EvaluationRecord&)> on_evaluated;
  const EvolveState* resume_from = nullptr;
};

namespace detail {

inline std::string save_rng(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline std::mt19937_64 load_rng(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream in(state);
  in >> rng;
  if (!in) throw ConfigError("checkpoint RNG state is corrupt");
  return rng;
}

/// Adds `rec` to the archive unless something there dominates it or already
/// has its key; evicts members it dominates.
inline void archive_insert(std::vector<Individual>& archive, const EvaluationRecord& rec) {
  for (const auto& a : archive) {
    if (dominates(*a.fitness, rec.fitness) || canonical_key(a.genotype) == rec.key) return;
  }
  std::erase_if(archive, [&](const Individual& a) { return dominates(rec.fitness, *a.fitness); });
  archive.push_back(Individual{rec.genotype, rec.fitness, 0, std::nullopt});
}

}  // namespace detail

class Evolver {
 public:
  Evolver(NetworkTemplate tmpl, Mode mode, FitnessFunction fitness, EvolveConfig cfg)
      : tmpl_(std::move(tmpl)),
        mode_(mode),
        fitness_(std::move(fitness)),
        cfg_(cfg),
        worst_(worst_case_fitness(tmpl_, mode)) {
    if (cfg_.population < 1) throw ConfigError("population must be >= 1");
    if (cfg_.generations < 0) throw ConfigError("generations must be >= 0");
    if (cfg_.mutation_rate < 0 || cfg_.mutation_rate > 1) {
      throw ConfigError("mutation_rate must lie in [0, 1]");
    }
  }

  /// Runs (or resumes) the search and returns the final state.
  EvolveState run(const EvolveHooks& hooks = {}) {
    EvolveState state;
    evaluated_ = &state.evaluated;
    index_.clear();
    std::mt19937_64 rng(cfg_.seed);
    if (hooks.resume_from) {
      state = *hooks.resume_from;
      rng = detail::load_rng(state.rng_state);
      for (std::size_t i = 0; i < state.evaluated.size(); ++i) {
        index_[state.evaluated[i].key] = i;
      }
    } else {
      std::vector<Genotype> initial;
      for (int i = 0; i < cfg_.population; ++i) {
        initial.push_back(cfg_.inject_benchmark && i == 0
                              ? benchmark_genotype(tmpl_, mode_)
                              : random_genotype(tmpl_, mode_, rng));
      }
      evaluate_all(initial, state, hooks);
      for (auto& g : initial) {
        state.population.push_back(Individual{g, lookup(g), std::nullopt, std::nullopt});
      }
      rank_population(state.population);
      state.rng_state = detail::save_rng(rng);
    }

    for (int gen = state.generation + 1; gen <= cfg_.generations; ++gen) {
      std::vector<Genotype> offspring;
      offspring.reserve(state.population.size());
      for (std::size_t i = 0; i < state.population.size(); ++i) {
        const std::size_t parent =
            cfg_.tournament_parents ? crowded_tournament(state.population, rng) : i;
        offspring.push_back(mutate(state.population[parent].genotype, cfg_.mutation_rate, rng));
      }
      evaluate_all(offspring, state, hooks);

      std::vector<Individual> pool = state.population;
      for (auto& g : offspring) pool.push_back(Individual{g, lookup(g), std::nullopt, std::nullopt});
      std::vector<FitnessVector> fits;
      for (const auto& ind : pool) fits.push_back(*ind.fitness);
      const auto sel = select_survivors(fits, std::size_t(cfg_.population));
      std::vector<Individual> next;
      for (std::size_t k = 0; k < sel.indices.size(); ++k) {
        Individual ind = pool[sel.indices[k]];
        ind.rank = sel.ranks[k];
        ind.crowding = sel.crowding[k];
        next.push_back(std::move(ind));
      }
      state.population = std::move(next);
      state.generation = gen;
      state.rng_state = detail::save_rng(rng);
      if (hooks.on_generation && !hooks.on_generation(state)) break;
    }
    return state;
  }

  const FitnessVector& worst_case() const { return worst_; }

 private:
  FitnessVector lookup(const Genotype& g) const {
    return evaluated_->at(index_.at(canonical_key(g))).fitness;
  }

  void rank_population(std::vector<Individual>& pop) {
    const auto fronts = assign_ranks(pop);
    for (const auto& front : fronts) {
      std::vector<FitnessVector> members;
      for (auto i : front) members.push_back(*pop[i].fitness);
      const auto crowd = crowding_distance(members);
      for (std::size_t k = 0; k < front.size(); ++k) pop[front[k]].crowding = crowd[k];
    }
  }

  /// Evaluates the genotypes whose keys have not been seen yet. Work may run
  /// on several threads; results are recorded in input order.
  void evaluate_all(const std::vector<Genotype>& batch, EvolveState& state,
                    const EvolveHooks& hooks) {
    std::vector<EvaluationRecord> todo;
    std::unordered_map<std::string, bool> queued;
    for (const auto& g : batch) {
      auto key = canonical_key(g);
      if (index_.count(key) || queued.count(key)) continue;
      queued[key] = true;
      todo.push_back(EvaluationRecord{std::move(key), g, {}, false, {}});
    }
    auto work = [this](EvaluationRecord& rec) {
      try {
        rec.fitness = fitness_(rec.genotype);
        if (rec.fitness.size() != worst_.size()) {
          throw ComputeError("evaluator returned " + std::to_string(rec.fitness.size()) +
                             " objectives, expected " + std::to_string(worst_.size()));
        }
        for (double v : rec.fitness.objectives) {
          if (!std::isfinite(v)) throw ComputeError("evaluator returned a non-finite objective");
        }
      } catch (const std::exception& e) {
        rec.fitness = worst_;
        rec.failed = true;
        rec.error = e.what();
      }
    };
    const int workers = std::max(1, std::min<int>(cfg_.workers, int(todo.size())));
    if (workers == 1) {
      for (auto& rec : todo) work(rec);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i; (i = next.fetch_add(1)) < todo.size();) work(todo[i]);
        });
      }
    }
    for (auto& rec : todo) {
      index_[rec.key] = state.evaluated.size();
      detail::archive_insert(state.archive, rec);
      if (hooks.on_evaluated) hooks.on_evaluated(rec);
      state.evaluated.push_back(std::move(rec));
    }
  }

  NetworkTemplate tmpl_;
  Mode mode_;
  FitnessFunction fitness_;
  EvolveConfig cfg_;
  FitnessVector worst_;
  std::unordered_map<std::string, std::size_t> index_;
  const std::vector<EvaluationRecord>* evaluated_ = nullptr;
};

inline EvolveState evolve(const NetworkTemplate& tmpl, Mode mode, FitnessFunction fitness,
                          const EvolveConfig& cfg, const EvolveHooks& hooks = {}) {
  return Evolver(tmpl, mode, std::move(fitness), cfg).run(hooks);
}

/// Non-dominated subset of `points` (indices), duplicates of a kept point dropped.
inline std::vector<std::size_t> nondominated_indices(std::span<const FitnessVector> points) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
      dominated = j != i && dominates(points[j], points[i]);
    }
    if (!dominated) keep.push_back(i);
  }
  return keep;
}

// JSON encoding for checkpoints. Infinite crowding is written as "inf".

inline void to_json(nlohmann::json& j, const FitnessVector& f) { j = f.objectives; }
inline void from_json(const nlohmann::json& j, FitnessVector& f) { j.get_to(f.objectives); }

inline void to_json(nlohmann::json& j, const Individual& ind) {
  j = nlohmann::json{{"genotype", ind.genotype}};
  j["fitness"] = ind.fitness ? nlohmann::json(*ind.fitness) : nlohmann::json(nullptr);
  j["rank"] = ind.rank ? nlohmann::json(*ind.rank) : nlohmann::json(nullptr);
  if (!ind.crowding) {
    j["crowding"] = nullptr;
  } else if (std::isinf(*ind.crowding)) {
    j["crowding"] = "inf";
  } else {
    j["crowding"] = *ind.crowding;
  }
}

inline void from_json(const nlohmann::json& j, Individual& ind) {
  j.at("genotype").get_to(ind.genotype);
  ind.fitness.reset();
  ind.rank.reset();
  ind.crowding.reset();
  if (!j.at("fitness").is_null()) ind.fitness = j.at("fitness").get<FitnessVector>();
  if (!j.at("rank").is_null()) ind.rank = j.at("rank").get<int>();
  const auto& c = j.at("crowding");
  if (c.is_string()) {
    ind.crowding = std::numeric_limits<double>::infinity();
  } else if (!c.is_null()) {
    ind.crowding = c.get<double>();
  }
}

inline void to_json(nlohmann::json& j, const EvaluationRecord& r) {
  j = nlohmann::json{{"key", r.key}, {"genotype", r.genotype}, {"fitness", r.fitness},
                     {"failed", r.failed}, {"error", r.error}};
}

inline void from_json(const nlohmann::json& j, EvaluationRecord& r) {
  j.at("key").get_to(r.key);
  j.at("genotype").get_to(r.genotype);
  j.at("fitness").get_to(r.fitness);
  j.at("failed").get_to(r.failed);
  j.at("error").get_to(r.error);
}

inline void to_json(nlohmann::json& j, const EvolveState& s) {
  j = nlohmann::json{{"generation", s.generation},   {"rng_state", s.rng_state},
                     {"population", s.population},   {"archive", s.archive},
                     {"evaluated", s.evaluated}};
}

inline void from_json(const nlohmann::json& j, EvolveState& s) {
  j.at("generation").get_to(s.generation);
  j.at("rng_state").get_to(s.rng_state);
  j.at("population").get_to(s.population);
  j.at("archive").get_to(s.archive);
  j.at("evaluated").get_to(s.evaluated);
}

}  // namespace kshape::moea
