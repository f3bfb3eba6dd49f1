#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "kshape/runner/config.hpp"
#include "kshape/runner/exports.hpp"
#include "kshape/runner/run.hpp"

namespace fs = std::filesystem;
using namespace kshape;
using namespace kshape::runner;

namespace {

/// Command-line settings that map one-to-one onto config keys.
struct ConfigFlags {
  std::string config_file;
  nlohmann::json values = nlohmann::json::object();
  std::vector<std::function<void()>> collect;

  template <typename T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    collect.push_back([this, value, opt, key] {
      if (opt->count()) values[key] = *value;
    });
  }

  void add_switch(CLI::App* app, const std::string& flag, const std::string& key,
                  const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    collect.push_back([this, opt, key] {
      if (opt->count()) values[key] = true;
    });
  }

  void add_model(CLI::App* app) {
    add<std::string>(app, "--template", "template", "lenet5 | three_layer | four_layer");
    add<std::string>(app, "--dataset", "dataset", "mnist | fashion_mnist | cifar10");
    add<std::string>(app, "--mode", "mode", "two_obj | three_obj");
    add<std::vector<int>>(app, "--slots", "slots", "kernel slots per layer, overrides template");
    add<int>(app, "--fc-width", "fc_width", "hidden FC width, overrides template");
  }

  void add_training(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    add<std::string>(app, "--preset", "preset", "desk | full");
    add<std::string>(app, "--data-dir", "data_dir", "directory with the dataset files");
    add<std::size_t>(app, "--search-train", "search_train", "search training images");
    add<std::size_t>(app, "--search-eval", "search_eval", "search evaluation images");
    add<std::uint64_t>(app, "--split-seed", "split_seed", "seed of the data split");
    add<int>(app, "--epochs", "epochs", "search-phase epochs");
    add<int>(app, "--batch-size", "batch_size", "mini-batch size");
    add<double>(app, "--lr", "lr", "Adam learning rate");
    add<std::uint64_t>(app, "--seed", "seed", "global seed");
    add<int>(app, "--retrain-epochs", "retrain_epochs", "retraining epochs");
    add<int>(app, "--retrain-lr-drop-epoch", "retrain_lr_drop_epoch", "epoch of the x0.1 drop");
    add<double>(app, "--weight-decay", "weight_decay", "retraining weight decay");
    add<std::string>(app, "--augment", "augment", "auto | on | off");
    add<int>(app, "--workers", "workers", "parallel evaluations (also KSHAPE_WORKERS)");
  }

  /// File, then KSHAPE_WORKERS, then flags.
  RunConfig resolve(const nlohmann::json& base = nlohmann::json::object()) {
    for (auto& c : collect) c();
    std::vector<nlohmann::json> layers{base};
    if (!config_file.empty()) layers.push_back(read_json_file(config_file));
    if (const char* env = std::getenv("KSHAPE_WORKERS")) {
      char* end = nullptr;
      const long w = std::strtol(env, &end, 10);
      if (*env == '\0' || *end != '\0' || w < 1) {
        throw ConfigError(std::string("KSHAPE_WORKERS must be a positive integer, got '") + env +
                          "'");
      }
      layers.push_back({{"workers", int(w)}});
    }
    layers.push_back(values);
    return resolve_config(layers);
  }
};

std::string run_tag(const std::string& ref, const fs::path& genotype_file) {
  return genotype_file.empty() ? ref : genotype_file.stem().string();
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const kshape::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ErrorKind::kData);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ErrorKind::kConfig);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(ErrorKind::kCompute);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-shape search for CNNs with NSGA-II"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("kshape ") + git_describe());

  // evolve
  auto* evolve = app.add_subcommand("evolve", "run or resume a search");
  ConfigFlags evolve_flags;
  evolve_flags.add_training(evolve);
  evolve_flags.add_model(evolve);
  evolve_flags.add<std::string>(evolve, "--out", "out_dir", "run directory");
  evolve_flags.add<int>(evolve, "--population", "population", "population size");
  evolve_flags.add<int>(evolve, "--generations", "generations", "generations");
  evolve_flags.add<double>(evolve, "--mutation-rate", "mutation_rate", "per-gene mutation rate");
  evolve_flags.add_switch(evolve, "--inject-benchmark", "inject_benchmark",
                          "seed generation 0 with the unmodified network");
  evolve_flags.add_switch(evolve, "--tournament", "tournament_parents",
                          "crowded tournament parent selection");
  int stop_after = 0;
  bool quiet = false;
  evolve->add_option("--stop-after", stop_after, "stop after this generation is checkpointed");
  evolve->add_flag("--quiet", quiet, "no progress output");

  // retrain
  auto* retrain = app.add_subcommand("retrain", "retrain a front member or genotype file");
  ConfigFlags retrain_flags;
  retrain_flags.add_training(retrain);
  retrain_flags.add_model(retrain);
  fs::path retrain_run, retrain_genotype, retrain_report;
  std::string retrain_ref = "ref1";
  retrain->add_option("--run", retrain_run, "run directory")->check(CLI::ExistingDirectory);
  retrain->add_option("--ref", retrain_ref, "ref1 | ref2 | ref3 | member id");
  retrain->add_option("--genotype", retrain_genotype, "genotype file")->check(CLI::ExistingFile);
  retrain->add_option("--report", retrain_report, "write the JSON report here");

  // cost
  auto* cost = app.add_subcommand("cost", "analytic multiplication count");
  ConfigFlags cost_flags;
  cost_flags.add_model(cost);
  fs::path cost_genotype;
  std::string all_square;
  bool cost_json = false;
  auto* cost_geno_opt =
      cost->add_option("--genotype", cost_genotype, "genotype file")->check(CLI::ExistingFile);
  cost->add_option("--all-square", all_square, "every slot this square shape: 1x1, 3x3, 5x5")
      ->excludes(cost_geno_opt);
  cost->add_flag("--json", cost_json, "machine-readable output");

  // export-front
  auto* front_cmd = app.add_subcommand("export-front", "rewrite front files from a run");
  fs::path front_run, front_out;
  front_cmd->add_option("--run", front_run, "run directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  front_cmd->add_option("--out", front_out, "output directory (default: the run directory)");

  // export-kernels
  auto* kernels = app.add_subcommand("export-kernels", "per-layer kernel shape counts as CSV");
  ConfigFlags kernel_flags;
  kernel_flags.add_model(kernels);
  fs::path kernels_run, kernels_genotype, kernels_out;
  std::string kernels_ref = "ref1";
  kernels->add_option("--run", kernels_run, "run directory")->check(CLI::ExistingDirectory);
  kernels->add_option("--ref", kernels_ref, "ref1 | ref2 | ref3 | member id");
  kernels->add_option("--genotype", kernels_genotype, "genotype file")->check(CLI::ExistingFile);
  kernels->add_option("--out", kernels_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ErrorKind::kConfig);
  }

  if (evolve->parsed()) {
    return guarded([&] {
      const auto cfg = evolve_flags.resolve();
      EvolveOptions opts;
      if (stop_after > 0) opts.stop_after = stop_after;
      if (!quiet) opts.progress = &std::cout;
      const auto out = run_evolve(cfg, opts);
      const auto& f = out.front;
      std::cout << "ref1 " << f.refs.ref1.index << ", ref2 " << f.refs.ref2.index << ", ref3 "
                << f.refs.ref3.index << " in " << (out.run_dir / "pareto_front.csv").string()
                << "\n";
      return 0;
    });
  }

  if (retrain->parsed()) {
    return guarded([&] {
      if (retrain_run.empty() == retrain_genotype.empty()) {
        throw ConfigError("retrain needs exactly one of --run or --genotype");
      }
      RunConfig cfg;
      Genotype g;
      if (!retrain_run.empty()) {
        for (auto& c : retrain_flags.collect) c();
        retrain_flags.collect.clear();
        nlohmann::json overrides = retrain_flags.values;
        if (!retrain_flags.config_file.empty()) {
          auto file = read_json_file(retrain_flags.config_file);
          file.update(overrides);
          overrides = file;
        }
        cfg = load_run_config(retrain_run, overrides);
        const auto front = load_front_json(retrain_run / "pareto_front.json");
        g = front_member(front, retrain_ref).genotype;
      } else {
        cfg = retrain_flags.resolve();
        g = load_genotype_file(retrain_genotype);
      }
      const auto tag = run_tag(retrain_ref, retrain_genotype);
      const auto report = run_retrain(cfg, g, tag);
      std::cout << format_retrain(report);
      fs::path path = retrain_report;
      if (path.empty() && !retrain_run.empty()) path = retrain_run / ("retrain_" + tag + ".json");
      if (!path.empty()) {
        write_text_file(path, nlohmann::json(report).dump(2) + "\n");
        std::cout << "report: " << path.string() << "\n";
      }
      return 0;
    });
  }

  if (cost->parsed()) {
    return guarded([&] {
      const auto cfg = cost_flags.resolve();
      const auto tmpl = make_template(cfg);
      Genotype g;
      if (!cost_genotype.empty()) {
        g = load_genotype_file(cost_genotype);
      } else {
        if (all_square.empty()) all_square = shape_by_id(tmpl.original_shape_id).label();
        const auto& s = shape_by_label(all_square);
        if (s.height != s.width) {
          throw ConfigError("--all-square needs a square shape, got " + all_square);
        }
        g = uniform_genotype(tmpl, s.id, cfg.mode);
      }
      validate(g, tmpl);
      std::cout << format_cost(network_cost(decode(g, tmpl)), tmpl, cfg.dataset, cost_json);
      return 0;
    });
  }

  if (front_cmd->parsed()) {
    return guarded([&] {
      const auto out = front_out.empty() ? front_run : front_out;
      const auto f = export_front(front_run, out);
      std::cout << f.members.size() << " members written to " << out.string() << "\n";
      return 0;
    });
  }

  if (kernels->parsed()) {
    return guarded([&] {
      if (kernels_run.empty() == kernels_genotype.empty()) {
        throw ConfigError("export-kernels needs exactly one of --run or --genotype");
      }
      NetworkTemplate tmpl;
      Genotype g;
      if (!kernels_run.empty()) {
        const auto cfg = load_run_config(kernels_run);
        tmpl = make_template(cfg);
        g = front_member(load_front_json(kernels_run / "pareto_front.json"), kernels_ref).genotype;
      } else {
        tmpl = make_template(kernel_flags.resolve());
        g = load_genotype_file(kernels_genotype);
      }
      const auto csv = export_kernel_distribution(g, tmpl);
      if (kernels_out.empty()) {
        std::cout << csv;
      } else {
        write_text_file(kernels_out, csv);
      }
      return 0;
    });
  }
  return 0;
}
