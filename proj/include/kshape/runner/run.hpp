#pragma once

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kshape/cost_model.hpp"
#include "kshape/data.hpp"
#include "kshape/evaluator.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"
#include "kshape/runner/config.hpp"
#include "kshape/runner/exports.hpp"

#ifndef KSHAPE_GIT_DESCRIBE
#define KSHAPE_GIT_DESCRIBE "unknown"
#endif

namespace kshape::runner {

inline const char* git_describe() { return KSHAPE_GIT_DESCRIBE; }

// ---------------------------------------------------------------------------
// Datasets

struct Splits {
  data::Dataset search_train;
  data::Dataset search_eval;
  data::Dataset retrain_train;
  data::Dataset test;
  std::string test_source;  // "official_test" or "held_out_search_eval"
};

inline data::Dataset load_training_file(const RunConfig& c) {
  const auto& d = c.data_dir;
  if (c.dataset == "cifar10") {
    std::vector<std::filesystem::path> batches;
    for (int i = 1; i <= 5; ++i) batches.push_back(d / ("data_batch_" + std::to_string(i) + ".bin"));
    for (const auto& b : batches) {
      if (!std::filesystem::exists(b)) throw DataError("missing CIFAR-10 batch " + b.string());
    }
    return data::load_cifar10(batches);
  }
  const auto images = d / "train-images-idx3-ubyte";
  if (!std::filesystem::exists(images)) {
    throw DataError("missing " + images.string() +
                    " (see tools/check_datasets.py and tools/prepare_mnist_subset.py)");
  }
  return data::load_idx(images, d / "train-labels-idx1-ubyte", c.dataset);
}

inline std::optional<data::Dataset> load_test_file(const RunConfig& c) {
  const auto& d = c.data_dir;
  if (c.dataset == "cifar10") {
    const auto p = d / "test_batch.bin";
    if (!std::filesystem::exists(p)) return std::nullopt;
    const std::filesystem::path paths[] = {p};
    return data::load_cifar10(paths);
  }
  const auto images = d / "t10k-images-idx3-ubyte";
  if (!std::filesystem::exists(images)) return std::nullopt;
  return data::load_idx(images, d / "t10k-labels-idx1-ubyte", c.dataset);
}

/// Search splits are carved from the training file with `split_seed`. The
/// retraining set is the whole training file when an official test file is
/// present; otherwise it excludes the search evaluation split, which then
/// serves as the test set.
inline Splits load_splits(const RunConfig& c) {
  const auto train = load_training_file(c);
  if (train.shape != dataset_input(c.dataset)) {
    throw DataError("dataset in " + c.data_dir.string() + " has shape " +
                    std::to_string(train.shape.channels) + "x" +
                    std::to_string(train.shape.height) + "x" + std::to_string(train.shape.width));
  }
  const std::size_t used = c.search_train + c.search_eval;
  if (used > train.size()) {
    throw DataError("search split needs " + std::to_string(used) + " images, " +
                    c.data_dir.string() + " has " + std::to_string(train.size()));
  }
  auto parts = data::split(train, {c.search_train, c.search_eval, train.size() - used},
                           c.split_seed);
  Splits s;
  s.search_train = parts[0];
  s.search_eval = parts[1];
  if (auto test = load_test_file(c)) {
    s.retrain_train = train;
    s.test = std::move(*test);
    s.test_source = "official_test";
  } else {
    s.retrain_train = parts[0];
    s.retrain_train.pixels.insert(s.retrain_train.pixels.end(), parts[2].pixels.begin(),
                                  parts[2].pixels.end());
    s.retrain_train.labels.insert(s.retrain_train.labels.end(), parts[2].labels.begin(),
                                  parts[2].labels.end());
    s.test = parts[1];
    s.test_source = "held_out_search_eval";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Run directory

/// Exclusive ownership of a run directory through run.lock. A lock left by a
/// process that no longer exists is taken over.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir) : path_(dir / "run.lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) throw DataError("cannot create " + path_.string());
      long owner = 0;
      std::ifstream(path_) >> owner;
      if (owner > 0 && (::kill(pid_t(owner), 0) == 0 || errno != ESRCH)) {
        throw ConfigError("run directory " + dir.string() + " is locked by process " +
                          std::to_string(owner));
      }
      std::filesystem::remove(path_);
    }
    throw ConfigError("could not lock " + dir.string());
  }
  ~RunLock() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int gen) {
  char name[32];
  std::snprintf(name, sizeof name, "gen_%04d.json", gen);
  return run_dir / "checkpoints" / name;
}

/// Highest generation with a checkpoint file, if any.
inline std::optional<int> latest_checkpoint(const std::filesystem::path& run_dir) {
  const auto dir = run_dir / "checkpoints";
  if (!std::filesystem::exists(dir)) return std::nullopt;
  static const std::regex pattern(R"(gen_(\d{4,})\.json)");
  std::optional<int> best;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const int g = std::stoi(m[1]);
      if (!best || g > *best) best = g;
    }
  }
  return best;
}

struct Checkpoint {
  nlohmann::json config;
  moea::EvolveState state;
};

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("config"), j.at("state").get<moea::EvolveState>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

inline std::string diff_keys(const nlohmann::json& a, const nlohmann::json& b) {
  std::string out;
  for (const auto& [k, v] : a.items()) {
    if (!b.contains(k) || b.at(k) != v) out += (out.empty() ? "" : ", ") + k;
  }
  for (const auto& [k, v] : b.items()) {
    if (!a.contains(k)) out += (out.empty() ? "" : ", ") + k;
  }
  return out;
}

/// Keeps the first log line of every key in `keep` and drops the rest, so a
/// resumed run's log matches an uninterrupted one.
inline void prune_eval_log(const std::filesystem::path& log, const std::set<std::string>& keep) {
  if (!std::filesystem::exists(log)) return;
  std::ifstream in(log);
  std::ostringstream out;
  std::set<std::string> seen;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::string key;
    try {
      key = nlohmann::json::parse(line).at("key").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      continue;  // torn final line
    }
    if (keep.count(key) && seen.insert(key).second) out << line << '\n';
  }
  in.close();
  write_text_file(log, out.str());
}

struct GenerationStats {
  int generation = 0;
  std::size_t evaluations = 0;
  std::size_t archive_size = 0;
  double hypervolume = 0.0;
  double min_error = 0.0;
  double min_mults = 0.0;
};

/// Archive statistics. The hypervolume reference is the worst-case fitness,
/// which bounds every evaluation, so values are comparable across
/// generations.
inline GenerationStats generation_stats(const moea::EvolveState& s,
                                        const moea::FitnessVector& reference) {
  GenerationStats g;
  g.generation = s.generation;
  g.evaluations = s.evaluated.size();
  g.archive_size = s.archive.size();
  std::vector<moea::FitnessVector> pts;
  g.min_error = 1.0;
  g.min_mults = reference[0];
  for (const auto& a : s.archive) {
    pts.push_back(*a.fitness);
    g.min_error = std::min(g.min_error, (*a.fitness)[1]);
    g.min_mults = std::min(g.min_mults, (*a.fitness)[0]);
  }
  g.hypervolume = moea::hypervolume(pts, reference);
  return g;
}

inline std::string history_row(const GenerationStats& g) {
  std::ostringstream out;
  out << g.generation << ',' << g.evaluations << ',' << g.archive_size << ','
      << format_double(g.hypervolume) << ',' << format_double(g.min_error) << ','
      << format_double(g.min_mults) << '\n';
  return out.str();
}

inline constexpr const char* kHistoryHeader =
    "generation,evaluations,archive_size,hypervolume,min_error,min_mults\n";

// ---------------------------------------------------------------------------
// evolve

struct EvolveOptions {
  std::optional<int> stop_after;  // stop once this generation is checkpointed
  std::ostream* progress = nullptr;
};

struct EvolveOutcome {
  std::filesystem::path run_dir;
  moea::EvolveState state;
  int resumed_from = 0;  // 0 for a fresh run
  bool finished = false;
  Front front;
};

/// Runs or resumes a search in cfg.out_dir. Layout:
///   config.json, run.lock, eval_log.jsonl, history.csv,
///   checkpoints/gen_NNNN.json, pareto_front.{csv,json,svg}
inline EvolveOutcome run_evolve(const RunConfig& cfg, const EvolveOptions& opts = {}) {
  validate(cfg);
  const auto& dir = cfg.out_dir;
  std::filesystem::create_directories(dir);
  RunLock lock(dir);
  auto say = [&](const std::string& msg) {
    if (opts.progress) *opts.progress << msg << std::endl;
  };

  nlohmann::json stored_config = cfg;
  stored_config["git_describe"] = git_describe();
  const auto config_path = dir / "config.json";
  const auto latest = latest_checkpoint(dir);
  std::optional<Checkpoint> resume;
  if (latest) {
    resume = read_checkpoint(checkpoint_path(dir, *latest));
    const auto mismatch = diff_keys(resume->config, result_defining(cfg));
    if (!mismatch.empty()) {
      throw ConfigError("run directory " + dir.string() +
                        " holds a run with different settings (" + mismatch + ")");
    }
  }

  const auto splits = load_splits(cfg);
  const auto tmpl = make_template(cfg);
  write_text_file(config_path, stored_config.dump(2) + "\n");

  const auto log_path = dir / "eval_log.jsonl";
  const auto history_path = dir / "history.csv";
  std::set<std::string> keep;
  std::ostringstream history;
  history << kHistoryHeader;
  if (resume) {
    for (const auto& r : resume->state.evaluated) keep.insert(r.key);
    std::ifstream in(history_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoi(line) <= resume->state.generation) history << line << '\n';
    }
  } else {
    std::error_code ec;
    std::filesystem::remove_all(dir / "checkpoints", ec);
  }
  prune_eval_log(log_path, keep);
  std::filesystem::create_directories(dir / "checkpoints");
  write_text_file(history_path, history.str());

  Evaluator evaluator(tmpl, cfg.mode, splits.search_train, splits.search_eval, eval_config(cfg),
                      log_path);
  const auto reference = moea::worst_case_fitness(tmpl, cfg.mode);
  const auto result_cfg = result_defining(cfg);

  EvolveOutcome outcome;
  outcome.run_dir = dir;
  outcome.resumed_from = resume ? resume->state.generation : 0;
  say(resume ? "resuming " + dir.string() + " from generation " +
                   std::to_string(resume->state.generation)
             : "starting " + dir.string() + " (" + std::to_string(splits.search_train.size()) +
                   " train / " + std::to_string(splits.search_eval.size()) + " eval images)");

  moea::EvolveHooks hooks;
  if (resume) hooks.resume_from = &resume->state;
  hooks.on_evaluated = [&](const moea::EvaluationRecord& r) {
    std::ostringstream msg;
    msg << "  eval " << r.key << " ->";
    for (double v : r.fitness.objectives) msg << ' ' << v;
    if (r.failed) msg << " (failed: " << r.error << ")";
    say(msg.str());
  };
  hooks.on_generation = [&](const moea::EvolveState& s) {
    const nlohmann::json ck{{"config", result_cfg}, {"state", s}};
    write_text_file(checkpoint_path(dir, s.generation), ck.dump() + "\n");
    const auto stats = generation_stats(s, reference);
    {
      std::ofstream h(history_path, std::ios::app);
      h << history_row(stats);
    }
    std::ostringstream msg;
    msg << "gen " << s.generation << "/" << cfg.generations << ": " << stats.evaluations
        << " evaluated, archive " << stats.archive_size << ", hv " << stats.hypervolume
        << ", best error " << stats.min_error << ", min mults " << stats.min_mults;
    say(msg.str());
    return !(opts.stop_after && s.generation >= *opts.stop_after);
  };

  moea::Evolver evolver(tmpl, cfg.mode, [&](const Genotype& g) { return evaluator.evaluate(g); },
                        evolve_config(cfg));
  outcome.state = evolver.run(hooks);
  outcome.finished = outcome.state.generation >= cfg.generations;
  outcome.front = make_front(outcome.state.archive, tmpl, cfg.dataset, cfg.mode);
  write_front_files(outcome.front, dir);
  say(std::string(outcome.finished ? "finished" : "stopped") + " at generation " +
      std::to_string(outcome.state.generation) + "; front has " +
      std::to_string(outcome.front.members.size()) + " members");
  return outcome;
}

/// Resolved config stored in a run directory, with `overrides` applied.
inline RunConfig load_run_config(const std::filesystem::path& run_dir,
                                 const nlohmann::json& overrides = nlohmann::json::object()) {
  auto stored = read_json_file(run_dir / "config.json");
  stored.erase("git_describe");
  return resolve_config({stored, overrides});
}

/// Rebuilds the front files of a run from its latest checkpoint.
inline Front export_front(const std::filesystem::path& run_dir,
                          const std::filesystem::path& out_dir) {
  const auto cfg = load_run_config(run_dir);
  const auto latest = latest_checkpoint(run_dir);
  if (!latest) throw DataError("no checkpoints in " + run_dir.string());
  const auto ck = read_checkpoint(checkpoint_path(run_dir, *latest));
  auto front = make_front(ck.state.archive, make_template(cfg), cfg.dataset, cfg.mode);
  write_front_files(front, out_dir);
  return front;
}

// ---------------------------------------------------------------------------
// cost

inline std::string format_cost(const CostReport& r, const NetworkTemplate& tmpl,
                               const std::string& dataset, bool json) {
  if (json) {
    nlohmann::json j = r;
    j["template"] = tmpl.id;
    j["dataset"] = dataset;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "template " << tmpl.id << " on " << dataset << " (" << tmpl.input.channels << "x"
      << tmpl.input.height << "x" << tmpl.input.width << ")\n";
  for (std::size_t l = 0; l < r.per_layer_mults.size(); ++l) {
    out << "layer " << l + 1 << " conv mults: " << r.per_layer_mults[l] << "\n";
  }
  out << "total conv mults: " << r.total_conv_mults << "\n"
      << "fc mults: " << r.fc_mults << "\n"
      << "kernel count: " << r.kernel_count << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// retrain

struct RetrainReport {
  std::string tag;
  std::string key;
  double test_accuracy = 0.0;
  std::uint64_t mults = 0;
  std::uint64_t benchmark_mults = 0;
  std::string reduction;  // benchmark / candidate, 2 decimals
  std::string test_source;
  std::size_t train_images = 0;
  std::size_t test_images = 0;
  nn::TrainReport train;
};

inline void to_json(nlohmann::json& j, const RetrainReport& r) {
  j = nlohmann::json{{"tag", r.tag},
                     {"key", r.key},
                     {"test_accuracy", r.test_accuracy},
                     {"conv_mults", r.mults},
                     {"benchmark_mults", r.benchmark_mults},
                     {"reduction", r.reduction},
                     {"test_source", r.test_source},
                     {"train_images", r.train_images},
                     {"test_images", r.test_images},
                     {"epoch_loss", r.train.epoch_loss},
                     {"epoch_lr", r.train.epoch_lr}};
}

inline RetrainReport run_retrain(const RunConfig& cfg, const Genotype& g, const std::string& tag) {
  const auto tmpl = make_template(cfg);
  validate(g, tmpl);
  const auto splits = load_splits(cfg);
  const auto result =
      retrain_reference(g, tmpl, splits.retrain_train, splits.test, retrain_config(cfg));
  RetrainReport r;
  r.tag = tag;
  r.key = canonical_key(g);
  r.test_accuracy = result.test_accuracy;
  r.mults = result.cost.total_conv_mults;
  r.benchmark_mults =
      network_cost(decode(uniform_genotype(tmpl, tmpl.original_shape_id), tmpl)).total_conv_mults;
  r.reduction = format_reduction(double(r.benchmark_mults), double(r.mults));
  r.test_source = splits.test_source;
  r.train_images = splits.retrain_train.size();
  r.test_images = splits.test.size();
  r.train = result.report;
  return r;
}

inline std::string format_retrain(const RetrainReport& r) {
  char acc[32];
  std::snprintf(acc, sizeof acc, "%.4f", r.test_accuracy);
  std::ostringstream out;
  out << "genotype " << r.tag << " (" << r.key << ")\n"
      << "test accuracy: " << acc << " on " << r.test_images << " images (" << r.test_source
      << ")\n"
      << "conv mults: " << r.mults << "\n"
      << "reduction vs benchmark: " << r.reduction << "x (" << r.benchmark_mults << " / "
      << r.mults << ")\n";
  return out.str();
}

}  // namespace kshape::runner
