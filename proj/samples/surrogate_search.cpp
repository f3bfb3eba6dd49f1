// Runs the kernel-shape search on the LeNet-5 template with a cheap stand-in
// for training, then prints the front and its reference points.
//
//   ./build/samples/surrogate_search [generations]

#include <cstdio>
#include <cstdlib>

#include "kshape/cost_model.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"
#include "kshape/runner/exports.hpp"

using namespace kshape;

int main(int argc, char** argv) {
  const auto tmpl = lenet5_template({1, 28, 28});
  const auto benchmark = network_cost(decode(uniform_genotype(tmpl, 9), tmpl)).total_conv_mults;

  // Error falls with total receptive area; wide-only or tall-only layers pay a
  // small penalty.
  auto fitness = [&](const Genotype& g) {
    double area = 0, skew = 0;
    for (const auto& layer : g.layers) {
      for (auto a : layer) {
        const auto& s = shape_by_id(a);
        area += s.area();
        skew += s.height != s.width;
      }
    }
    const double mults = double(network_cost(decode(g, tmpl)).total_conv_mults);
    return moea::FitnessVector{{mults, 0.5 / (1.0 + area / 96.0) + 0.0005 * skew}};
  };

  moea::EvolveConfig cfg;
  cfg.population = 25;
  cfg.generations = argc > 1 ? std::atoi(argv[1]) : 40;
  cfg.seed = 7;
  cfg.inject_benchmark = true;
  const auto state = moea::evolve(tmpl, Mode::kTwoObjective, fitness, cfg);

  const auto front = runner::make_front(state.archive, tmpl, "mnist", Mode::kTwoObjective);
  std::printf("%zu evaluations, %zu front members\n", state.evaluated.size(),
              front.members.size());
  std::printf("%12s %8s %9s\n", "conv mults", "error", "reduction");
  for (const auto& m : front.members) {
    std::printf("%12.0f %8.4f %8sx\n", m.fitness[0], m.fitness[1],
                runner::format_reduction(benchmark, std::uint64_t(m.fitness[0])).c_str());
  }
  const auto& ref1 = front.members[front.refs.ref1.index];
  std::printf("\nref1 genotype:\n%s", runner::format_genotype(ref1.genotype).c_str());
  return 0;
}
