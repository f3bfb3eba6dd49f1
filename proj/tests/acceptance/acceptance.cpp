// Acceptance checks. One line per criterion:
//   AC<n> PASS|FAIL|SKIP <title> [<seconds> s]: <detail>
// Usage: kshape_acceptance [AC1 AC2 ...]   (no arguments runs all)
// Exit status: 0 all pass, 1 any failure, 77 nothing failed but something skipped.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kshape/cost_model.hpp"
#include "kshape/data.hpp"
#include "kshape/evaluator.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"
#include "kshape/nn/activation.hpp"
#include "kshape/nn/dense.hpp"
#include "kshape/nn/loss.hpp"
#include "kshape/nn/network.hpp"
#include "kshape/nn/pool.hpp"
#include "kshape/runner/config.hpp"
#include "kshape/runner/exports.hpp"
#include "kshape/runner/run.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace kshape;
using kshape::testing::max_gradient_error;
using kshape::testing::random_tensor;
using moea::FitnessVector;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::kSkip, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kWork = KSHAPE_ACCEPTANCE_WORK_DIR;
const fs::path kDesk = KSHAPE_DATA_DIR;

fs::path fresh_dir(const std::string& name) {
  const auto d = kWork / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = KSHAPE_CLI_PATH;
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// --- AC1 ---------------------------------------------------------------------

Outcome ac1() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path log = fresh_dir("ac1") / "cost.json";
  std::uint64_t got[2] = {};
  const char* datasets[] = {"mnist", "cifar10"};
  for (int i = 0; i < 2; ++i) {
    const int rc = run_cli({"cost", "--template", "lenet5", "--dataset", datasets[i],
                            "--all-square", "5x5", "--json"},
                           log);
    if (rc != 0) return fail(fmt("cost exited %d: %s", rc, slurp(log).c_str()));
    got[i] = nlohmann::json::parse(slurp(log)).at("total_conv_mults").get<std::uint64_t>();
  }
  const double t = seconds_since(start);
  const auto detail = fmt("mnist %llu (want 10662400), cifar10 %llu (want 15564800), %.3f s",
                          (unsigned long long)got[0], (unsigned long long)got[1], t);
  const bool ok = got[0] == 10'662'400 && got[1] == 15'564'800 && t < 1.0;
  return ok ? pass(detail) : fail(detail);
}

// --- AC2 ---------------------------------------------------------------------

Outcome ac2() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int checked = 0, mismatches = 0;
  std::string first;
  for (const char* id : {"lenet5", "three_layer", "four_layer"}) {
    for (InputShape input : {InputShape{1, 28, 28}, InputShape{3, 32, 32}}) {
      const auto tmpl = template_by_id(id, input);
      for (auto mode : {Mode::kTwoObjective, Mode::kThreeObjective}) {
        for (int i = 0; i < 100; ++i) {
          const auto g = mutate(random_genotype(tmpl, mode, rng), 0.3, rng);
          const auto spec = decode(g, tmpl);
          nn::Network<float> net(spec, 1);
          const auto analytic = network_cost(spec).total_conv_mults;
          const auto counted = nn::count_forward_mults(net, input).conv;
          ++checked;
          if (analytic != counted) {
            ++mismatches;
            if (first.empty()) first = fmt(" first: %s %llu vs %llu", canonical_key(g).c_str(),
                                           (unsigned long long)analytic,
                                           (unsigned long long)counted);
          }
        }
      }
    }
  }
  const double t = seconds_since(start);
  const auto detail = fmt("%d genotypes, %d mismatches, %.1f s (limit 120)", checked, mismatches, t) + first;
  return mismatches == 0 && t < 120 ? pass(detail) : fail(detail);
}

// --- AC3 ---------------------------------------------------------------------

Outcome ac3() {
  const auto start = std::chrono::steady_clock::now();
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  std::string worst_op;
  auto note = [&](double e, const std::string& op) {
    if (e > worst || !std::isfinite(e)) {
      worst = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
      worst_op = op;
    }
  };
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 7), chans(1, 3);

  for (const auto& s : catalogue()) {
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t n = chans(rng), c = chans(rng), h = dim(rng), w = dim(rng);
      const int out = chans(rng);
      nn::ConvBranch<double> b("conv" + s.label(), s.height, s.width, int(c), out);
      b.weights = random_tensor(b.weights.shape(), rng);
      b.bias = random_tensor(b.bias.shape(), rng);
      auto input = random_tensor(Shape{n, c, h, w}, rng);
      auto probe = random_tensor(Shape{n, std::size_t(out), h, w}, rng);
      auto g = nn::conv2d_backward(input, b, probe);
      auto loss = [&] { return testing::dot(nn::conv2d_forward(input, b).data(), probe.data()); };
      note(max_gradient_error(input.data(), g.input.data(), loss), b.name + " input");
      note(max_gradient_error(b.weights.data(), g.weights.data(), loss), b.name + " weights");
      note(max_gradient_error(b.bias.data(), g.bias.data(), loss), b.name + " bias");
    }
  }

  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = chans(rng), c = chans(rng), h = 2 * dim(rng) + trial % 2,
                      w = 2 * dim(rng);
    auto input = random_tensor(Shape{n, c, h, w}, rng);
    auto pooled = nn::maxpool2x2(input);
    auto probe = random_tensor(pooled.output.shape(), rng);
    auto g = nn::maxpool2x2_backward(input.shape(), pooled.argmax, probe);
    auto loss = [&] { return testing::dot(nn::maxpool2x2(input).output.data(), probe.data()); };
    note(max_gradient_error(input.data(), g.data(), loss), "maxpool");

    auto r_in = random_tensor(Shape{n, c, h, w}, rng);
    auto r_probe = random_tensor(r_in.shape(), rng);
    auto rg = nn::relu_backward(nn::relu_forward(r_in), r_probe);
    auto r_loss = [&] { return testing::dot(nn::relu_forward(r_in).data(), r_probe.data()); };
    note(max_gradient_error(r_in.data(), rg.data(), r_loss), "relu");

    const int in_f = dim(rng) * 3, out_f = dim(rng);
    nn::Dense<double> d("fc", in_f, out_f);
    d.weights = random_tensor(d.weights.shape(), rng);
    d.bias = random_tensor(d.bias.shape(), rng);
    auto x = random_tensor(Shape{n, std::size_t(in_f)}, rng);
    auto d_probe = random_tensor(Shape{n, std::size_t(out_f)}, rng);
    auto dg = nn::dense_backward(x, d, d_probe);
    auto d_loss = [&] { return testing::dot(nn::dense_forward(x, d).data(), d_probe.data()); };
    note(max_gradient_error(x.data(), dg.input.data(), d_loss), "dense input");
    note(max_gradient_error(d.weights.data(), dg.weights.data(), d_loss), "dense weights");
    note(max_gradient_error(d.bias.data(), dg.bias.data(), d_loss), "dense bias");

    std::vector<double> logits(10);
    std::uniform_real_distribution<double> lu(-5, 5);
    for (auto& v : logits) v = lu(rng);
    const int label = trial;
    auto sr = nn::softmax_cross_entropy<double>(logits, label);
    auto s_loss = [&] { return nn::softmax_cross_entropy<double>(logits, label).loss; };
    note(max_gradient_error(logits, sr.logit_grad, s_loss), "softmax cross-entropy");
  }

  // Whole network: first layer mixes all nine shapes, so concat and split run
  // through every branch.
  NetworkSpec spec;
  spec.input = {2, 8, 8};
  ConvLayerSpec mixed;
  for (const auto& s : catalogue()) mixed.branches.push_back({s.id, s.height, s.width, 1});
  mixed.pool_after = true;
  spec.conv_layers = {mixed, {{{4, 3, 3, 2}, {8, 5, 3, 1}}, true}};
  spec.fc_width = 5;
  nn::Network<double> net(spec, 7);
  for (Tensor<double>* p : net.parameters()) *p = random_tensor(p->shape(), rng, -0.5, 0.5);
  auto input = random_tensor(Shape{2, 2, 8, 8}, rng, 0.0, 1.0);
  const std::vector<int> labels{2, 7};
  auto loss = [&] { return nn::softmax_cross_entropy_batch<double>(net.forward(input), labels).loss; };
  auto logits = net.forward(input, true);
  auto lr = nn::softmax_cross_entropy_batch<double>(logits, labels);
  auto input_grad = net.backward(Tensor<double>(logits.shape(), lr.logit_grad));
  for (Tensor<double>* p : net.parameters()) {
    std::vector<double> analytic(p->grad().begin(), p->grad().end());
    note(max_gradient_error(p->data(), analytic, loss), "network " + to_string(p->shape()));
  }
  note(max_gradient_error(input.data(), input_grad.data(), loss), "network input");

  const double t = seconds_since(start);
  const auto detail =
      fmt("worst relative error %.3g (limit 1e-4) at %s, %.1f s (limit 300)", worst, worst_op.c_str(), t);
  return worst < kTol && t < 300 ? pass(detail) : fail(detail);
}

// --- AC4 ---------------------------------------------------------------------

struct SurrogateTally {
  int exact = 0;
  int never_dominated = 0;
};

SurrogateTally surrogate_runs(double rate) {
  const auto tmpl = testing::two_slot_template();
  const auto truth = testing::exhaustive_front(tmpl, Mode::kTwoObjective);
  SurrogateTally t;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    moea::EvolveConfig cfg;
    cfg.population = 8;
    cfg.generations = 30;
    cfg.seed = seed;
    cfg.mutation_rate = rate;
    const auto got = testing::archive_points(moea::evolve(
        tmpl, Mode::kTwoObjective, testing::surrogate(tmpl, Mode::kTwoObjective), cfg));
    t.exact += got == truth;
    bool clean = true;
    for (const auto& a : got) {
      for (const auto& p : truth) clean &= !moea::dominates(FitnessVector{p}, FitnessVector{a});
    }
    t.never_dominated += clean;
  }
  return t;
}

Outcome ac4() {
  const auto start = std::chrono::steady_clock::now();
  const auto main = surrogate_runs(0.5);
  const auto low = surrogate_runs(0.1);
  const double t = seconds_since(start);
  const auto detail = fmt(
      "81-genotype surrogate, rate 0.5: exact front %d/10 (need 9), never dominated %d/10 "
      "(need 10); rate 0.1 for reference: exact %d/10, never dominated %d/10; %.2f s",
      main.exact, main.never_dominated, low.exact, low.never_dominated, t);
  return main.exact >= 9 && main.never_dominated == 10 && t < 60 ? pass(detail) : fail(detail);
}

// --- AC5 ---------------------------------------------------------------------

Outcome ac5() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  int mismatched = 0;
  for (int instance = 0; instance < 1000; ++instance) {
    const std::size_t m = 2 + instance % 2;
    const int levels = instance % 3 == 0 ? 5 : 1000;
    std::uniform_int_distribution<int> v(0, levels - 1);
    std::vector<FitnessVector> pts(size(rng));
    for (auto& p : pts) {
      p.objectives.resize(m);
      for (auto& x : p.objectives) x = v(rng);
    }
    const auto fronts = moea::fast_nondominated_sort(pts);
    std::vector<int> got(pts.size(), -1);
    bool ok = true;
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      for (auto i : fronts[f]) {
        ok &= got[i] == -1;
        got[i] = int(f);
      }
    }
    ok &= got == testing::brute_force_ranks(pts);
    mismatched += !ok;
  }
  const std::vector<FitnessVector> worked{FitnessVector{{0, 2}}, FitnessVector{{1, 1}},
                                          FitnessVector{{2, 0}}};
  const auto d = moea::crowding_distance(worked);
  const double inf = std::numeric_limits<double>::infinity();
  const bool crowd = d[0] == inf && d[2] == inf && d[1] == 2.0;
  const auto detail = fmt("%d/1000 partitions differ from brute force; crowding (%g, %g, %g), want (inf, 2, inf)",
                          mismatched, d[0], d[1], d[2]);
  return mismatched == 0 && crowd ? pass(detail) : fail(detail);
}

// --- AC6 ---------------------------------------------------------------------

Outcome ac6() {
  if (!fs::exists(kDesk / "train-images-idx3-ubyte")) {
    return skip("no MNIST subset in " + kDesk.string());
  }
  const auto start = std::chrono::steady_clock::now();
  auto cfg = runner::resolve_config(
      {nlohmann::json{{"data_dir", kDesk.string()}, {"slots", {8, 16}}, {"fc_width", 64}}});
  const auto splits = runner::load_splits(cfg);
  const auto tmpl = runner::make_template(cfg);
  Evaluator ev(tmpl, Mode::kTwoObjective, splits.search_train, splits.search_eval,
               runner::eval_config(cfg));
  const auto entry = ev.evaluate_entry(uniform_genotype(tmpl, tmpl.original_shape_id));
  const double t = seconds_since(start);
  const auto detail = fmt("(8,16)/fc64, %d epochs on %zu images: %.2f%% top-1 on %zu held out "
                          "(need 95%%), %.0f s on %u hardware threads (limit 600)",
                          cfg.epochs, splits.search_train.size(), 100 * entry.accuracy,
                          splits.search_eval.size(), t, std::thread::hardware_concurrency());
  return entry.accuracy >= 0.95 && t < 600 ? pass(detail) : fail(detail);
}

// --- AC7 / AC8 ---------------------------------------------------------------

struct DeskSearch {
  fs::path dir;
  int rc = -1;
  double seconds = 0;
  std::string log;
};

DeskSearch desk_search(const std::string& name, Mode mode) {
  DeskSearch s;
  s.dir = fresh_dir(name);
  const auto start = std::chrono::steady_clock::now();
  s.rc = run_cli({"evolve", "--preset", "desk", "--dataset", "mnist", "--mode", std::string(mode_name(mode)),
                  "--data-dir", kDesk.string(), "--population", "8", "--generations", "10",
                  "--out", (s.dir / "run").string()},
                 s.dir / "evolve.log");
  s.seconds = seconds_since(start);
  s.log = slurp(s.dir / "evolve.log");
  return s;
}

moea::EvolveState checkpoint_state(const fs::path& run, int gen) {
  return runner::read_checkpoint(runner::checkpoint_path(run, gen)).state;
}

std::vector<FitnessVector> archive_fitness(const moea::EvolveState& s) {
  std::vector<FitnessVector> out;
  for (const auto& a : s.archive) out.push_back(*a.fitness);
  return out;
}

Outcome ac7() {
  if (!fs::exists(kDesk / "train-images-idx3-ubyte")) {
    return skip("no MNIST subset in " + kDesk.string());
  }
  const auto s = desk_search("ac7", Mode::kTwoObjective);
  const auto run = s.dir / "run";
  if (s.rc != 0) return fail(fmt("evolve exited %d after %.0f s: ", s.rc, s.seconds) + s.log);

  const auto tmpl = lenet5_template({1, 28, 28});
  const auto ref = moea::worst_case_fitness(tmpl, Mode::kTwoObjective);
  std::vector<double> hv;
  for (int g = 1; g <= 10; ++g) {
    if (!fs::exists(runner::checkpoint_path(run, g))) return fail(fmt("checkpoint %d missing", g));
    hv.push_back(moea::hypervolume(archive_fitness(checkpoint_state(run, g)), ref));
  }
  int decreases = 0;
  for (std::size_t i = 1; i < hv.size(); ++i) decreases += hv[i] < hv[i - 1];

  const auto front = runner::read_front_csv(run / "pareto_front.csv");
  int dominated_pairs = 0;
  for (const auto& a : front) {
    for (const auto& b : front) dominated_pairs += moea::dominates(a, b);
  }
  const double benchmark = double(network_cost(decode(uniform_genotype(tmpl, 9), tmpl)).total_conv_mults);
  double cheapest = std::numeric_limits<double>::infinity();
  for (const auto& f : front) cheapest = std::min(cheapest, f[0]);

  const auto detail = fmt(
      "hypervolume gen1 %.6g -> gen10 %.6g with %d decreases; %zu front members, %d dominated "
      "pairs; cheapest member %.0f mults = %.3f of benchmark %.0f (need < 0.5); %.0f s (limit 7200)",
      hv.front(), hv.back(), decreases, front.size(), dominated_pairs, cheapest,
      cheapest / benchmark, benchmark, s.seconds);
  const bool ok = decreases == 0 && dominated_pairs == 0 && !front.empty() &&
                  cheapest < 0.5 * benchmark && s.seconds < 7200;
  return ok ? pass(detail) : fail(detail);
}

Outcome ac8() {
  if (!fs::exists(kDesk / "train-images-idx3-ubyte")) {
    return skip("no MNIST subset in " + kDesk.string());
  }
  const auto s = desk_search("ac8", Mode::kThreeObjective);
  const auto run = s.dir / "run";
  if (s.rc != 0) return fail(fmt("evolve exited %d after %.0f s: ", s.rc, s.seconds) + s.log);
  const auto state = checkpoint_state(run, 10);
  const moea::Individual* cheapest = nullptr;
  for (const auto& a : state.archive) {
    if (!cheapest || (*a.fitness)[0] < (*cheapest->fitness)[0] ||
        ((*a.fitness)[0] == (*cheapest->fitness)[0] && (*a.fitness)[2] < (*cheapest->fitness)[2])) {
      cheapest = &a;
    }
  }
  if (!cheapest) return fail("empty archive");
  const int slots = 32 + 64;
  const int active = active_kernels(cheapest->genotype);
  const auto detail = fmt("min-mults archive member (%.0f mults) keeps %d of %d kernels "
                          "(objective says %.0f); archive size %zu; %.0f s",
                          (*cheapest->fitness)[0], active, slots, (*cheapest->fitness)[2],
                          state.archive.size(), s.seconds);
  return active < slots && double(active) == (*cheapest->fitness)[2] ? pass(detail) : fail(detail);
}

// --- AC9 ---------------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

Outcome ac9() {
  const auto dir = fresh_dir("ac9");
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);

  // IDX: raw bytes in, load, write back, compare files.
  {
    std::ofstream img(dir / "img", std::ios::binary), lab(dir / "lab", std::ios::binary);
    auto be32 = [](std::ofstream& o, std::uint32_t v) {
      const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
      o.write(b, 4);
    };
    be32(img, 0x803);
    be32(img, 7);
    be32(img, 28);
    be32(img, 28);
    for (int i = 0; i < 7 * 28 * 28; ++i) img.put(char(byte(rng)));
    be32(lab, 0x801);
    be32(lab, 7);
    for (int i = 0; i < 7; ++i) lab.put(char(label(rng)));
  }
  const auto idx = data::load_idx(dir / "img", dir / "lab");
  data::write_idx(idx, dir / "img2", dir / "lab2");
  const bool idx_ok = same_bytes(dir / "img", dir / "img2") && same_bytes(dir / "lab", dir / "lab2");

  {
    std::ofstream bin(dir / "batch.bin", std::ios::binary);
    for (int r = 0; r < 5; ++r) {
      bin.put(char(label(rng)));
      for (int i = 0; i < 3072; ++i) bin.put(char(byte(rng)));
    }
  }
  const fs::path one[] = {dir / "batch.bin"};
  data::write_cifar10(data::load_cifar10(one), dir / "batch2.bin");
  const bool cifar_ok = same_bytes(dir / "batch.bin", dir / "batch2.bin");
  std::string detail = fmt("fixture round trips: IDX %s, CIFAR-10 %s", idx_ok ? "identical" : "DIFFER",
                           cifar_ok ? "identical" : "DIFFER");
  if (!idx_ok || !cifar_ok) return fail(detail);

  struct Official {
    const char* dataset;
    fs::path dir;
    std::size_t train, test;
  };
  const Official sets[] = {{"mnist", KSHAPE_OFFICIAL_MNIST_DIR, 60000, 10000},
                           {"fashion_mnist", KSHAPE_OFFICIAL_FASHION_DIR, 60000, 10000},
                           {"cifar10", KSHAPE_OFFICIAL_CIFAR_DIR, 50000, 10000}};
  int found = 0;
  bool counts_ok = true;
  for (const auto& o : sets) {
    runner::RunConfig c;
    c.dataset = o.dataset;
    c.data_dir = o.dir;
    try {
      const auto train = runner::load_training_file(c);
      const auto test = runner::load_test_file(c);
      const std::size_t nt = test ? test->size() : 0;
      ++found;
      counts_ok &= train.size() == o.train && nt == o.test;
      detail += fmt("; %s %zu/%zu (want %zu/%zu)", o.dataset, train.size(), nt, o.train, o.test);
    } catch (const DataError&) {
      detail += fmt("; %s not found in %s", o.dataset, o.dir.c_str());
    }
  }
  if (!counts_ok) return fail(detail);
  if (found == 0) return skip(detail + "; official counts unverified");
  return pass(detail);
}

// --- AC10 --------------------------------------------------------------------

std::vector<std::string> replay_args(const fs::path& out) {
  return {"evolve",          "--data-dir",  kDesk.string(), "--slots",    "4",
          "8",               "--fc-width",  "32",           "--search-train", "1500",
          "--search-eval",   "500",         "--epochs",     "1",          "--population",
          "6",               "--generations", "6",          "--seed",     "10",
          "--quiet",         "--out",       out.string()};
}

std::string archive_json(const fs::path& run) {
  return nlohmann::json(checkpoint_state(run, 6).archive).dump();
}

Outcome ac10() {
  if (!fs::exists(kDesk / "train-images-idx3-ubyte")) {
    return skip("no MNIST subset in " + kDesk.string());
  }
  const auto dir = fresh_dir("ac10");
  for (const char* r : {"a", "b"}) {
    if (const int rc = run_cli(replay_args(dir / r), dir / (std::string(r) + ".log")); rc != 0) {
      return fail(fmt("run %s exited %d", r, rc));
    }
  }
  const bool replay_state = slurp(runner::checkpoint_path(dir / "a", 6)) ==
                            slurp(runner::checkpoint_path(dir / "b", 6));
  const bool replay_front = slurp(dir / "a" / "pareto_front.csv") == slurp(dir / "b" / "pareto_front.csv");

  // Interrupted run: SIGKILL once generation 2 is on disk, then resume.
  const auto args = replay_args(dir / "c");
  const pid_t pid = fork();
  if (pid == 0) {
    std::vector<char*> argv{const_cast<char*>(KSHAPE_CLI_PATH)};
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    const int null = ::open("/dev/null", O_WRONLY);
    dup2(null, 1);
    dup2(null, 2);
    execv(KSHAPE_CLI_PATH, argv.data());
    _exit(127);
  }
  int status = 0;
  bool killed = false;
  while (true) {
    if (waitpid(pid, &status, WNOHANG) == pid) break;
    if (fs::exists(runner::checkpoint_path(dir / "c", 2))) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      killed = WIFSIGNALED(status);
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (!killed) return fail("the run finished before it could be interrupted");
  const int at_kill = runner::latest_checkpoint(dir / "c").value_or(0);
  if (const int rc = run_cli(args, dir / "c.log"); rc != 0) {
    return fail(fmt("resume exited %d: ", rc) + slurp(dir / "c.log"));
  }
  const bool resumed_archive = archive_json(dir / "a") == archive_json(dir / "c");
  const bool resumed_front = slurp(dir / "a" / "pareto_front.csv") == slurp(dir / "c" / "pareto_front.csv");

  const auto detail = fmt("replay: final checkpoint %s, front %s; killed at checkpoint %d of 6, "
                          "resumed archive %s, front %s",
                          replay_state ? "identical" : "DIFFERS", replay_front ? "identical" : "DIFFERS",
                          at_kill, resumed_archive ? "identical" : "DIFFERS",
                          resumed_front ? "identical" : "DIFFERS");
  return replay_state && replay_front && resumed_archive && resumed_front ? pass(detail) : fail(detail);
}

struct Criterion {
  const char* id;
  const char* title;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {"AC1", "exact MAC reproduction", ac1},
    {"AC2", "cost oracle equivalence", ac2},
    {"AC3", "gradient suite", ac3},
    {"AC4", "NSGA-II surrogate oracle", ac4},
    {"AC5", "sorting and crowding oracle", ac5},
    {"AC6", "desk-scale training sanity", ac6},
    {"AC7", "desk-scale end-to-end search", ac7},
    {"AC8", "three-objective kernel removal", ac8},
    {"AC9", "data layer", ac9},
    {"AC10", "determinism and resume", ac10},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool failed = false, skipped = false;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << c.id << " " << tag << " " << c.title << " [" << fmt("%.1f", seconds_since(start))
              << " s]: " << o.detail << std::endl;
    failed |= o.status == Status::kFail;
    skipped |= o.status == Status::kSkip;
  }
  return failed ? 1 : skipped ? 77 : 0;
}
