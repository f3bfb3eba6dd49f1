#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "kshape/genotype.hpp"

using namespace kshape;

namespace {

const NetworkTemplate kLenet = lenet5_template({1, 28, 28});

NetworkTemplate tiny_template(std::vector<int> slots) {
  return {"tiny", {1, 8, 8}, std::move(slots), std::vector<bool>(3, true), 16, 10, 9};
}

std::vector<int> sorted(std::vector<std::uint8_t> layer) {
  std::vector<int> out;
  for (auto a : layer) {
    if (a != kRemoved) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Catalogue, NineShapesInIdOrder) {
  const auto& c = catalogue();
  ASSERT_EQ(c.size(), 9u);
  const std::pair<int, int> dims[9] = {{1, 1}, {1, 3}, {3, 1}, {3, 3}, {1, 5},
                                       {5, 1}, {3, 5}, {5, 3}, {5, 5}};
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 9; ++i) {
    EXPECT_EQ(c[i].id, i + 1);
    EXPECT_EQ(c[i].height, dims[i].first);
    EXPECT_EQ(c[i].width, dims[i].second);
    seen.insert(dims[i]);
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(Catalogue, SmallestAndLargest) {
  EXPECT_EQ(shape_by_id(1).label(), "1x1");
  EXPECT_EQ(shape_by_id(9).label(), "5x5");
  EXPECT_EQ(shape_by_id(9).area(), 25);
  EXPECT_EQ(shape_by_id(4).area(), 9);
  EXPECT_GT(shape_by_id(9).area(), 2 * shape_by_id(4).area());
}

TEST(Catalogue, LookupByLabel) {
  EXPECT_EQ(shape_by_label("5x3").id, 8);
  EXPECT_THROW(shape_by_label("7x7"), ConfigError);
  EXPECT_THROW(shape_by_id(0), ConfigError);
  EXPECT_THROW(shape_by_id(10), ConfigError);
}

TEST(Templates, BuiltIns) {
  EXPECT_EQ(kLenet.slots, (std::vector<int>{32, 64}));
  EXPECT_EQ(kLenet.fc_width, 512);
  const auto three = three_layer_template({3, 32, 32});
  EXPECT_EQ(three.slots, (std::vector<int>{64, 64, 64}));
  EXPECT_EQ(three.pool_after, (std::vector<bool>{true, true, true}));
  const auto four = template_by_id("four_layer", {3, 32, 32});
  EXPECT_EQ(four.slots, (std::vector<int>{64, 64, 64, 64}));
  EXPECT_EQ(four.pool_after, (std::vector<bool>{true, true, false, true}));
  EXPECT_THROW(template_by_id("vgg", {1, 28, 28}), ConfigError);
}

TEST(RandomGenotype, LayerLengthsFollowTemplate) {
  std::mt19937_64 rng(1);
  for (Mode mode : {Mode::kTwoObjective, Mode::kThreeObjective}) {
    auto g = random_genotype(kLenet, mode, rng);
    ASSERT_EQ(g.layers.size(), 2u);
    EXPECT_EQ(g.layers[0].size(), 32u);
    EXPECT_EQ(g.layers[1].size(), 64u);
    EXPECT_EQ(g.mode, mode);
    for (const auto& layer : g.layers) {
      for (auto a : layer) {
        EXPECT_GE(a, 1);
        EXPECT_LE(a, 9);
      }
    }
    EXPECT_NO_THROW(validate(g, kLenet));
  }
}

TEST(RandomGenotype, SameSeedSameGenotype) {
  std::mt19937_64 a(77), b(77);
  EXPECT_EQ(random_genotype(kLenet, Mode::kTwoObjective, a),
            random_genotype(kLenet, Mode::kTwoObjective, b));
}

TEST(RandomGenotype, ShapeFrequenciesAreUniform) {
  std::mt19937_64 rng(2024);
  const auto tmpl = tiny_template({100});
  std::array<int, 10> counts{};
  for (int draw = 0; draw < 100; ++draw) {
    const auto g = random_genotype(tmpl, Mode::kThreeObjective, rng);
    for (auto a : g.layers[0]) ++counts[a];
  }
  const double n = 10000, p = 1.0 / 9;
  const double sigma = std::sqrt(n * p * (1 - p));
  double chi2 = 0.0;
  EXPECT_EQ(counts[0], 0);
  for (int id = 1; id <= 9; ++id) {
    EXPECT_LE(std::abs(counts[id] - n * p), 3 * sigma) << "shape " << id;
    chi2 += (counts[id] - n * p) * (counts[id] - n * p) / (n * p);
  }
  EXPECT_LT(chi2, 26.12);  // chi-square, 8 dof, p = 0.999
}

TEST(Mutate, RateZeroIsIdentity) {
  std::mt19937_64 rng(3);
  auto g = random_genotype(kLenet, Mode::kThreeObjective, rng);
  EXPECT_EQ(mutate(g, 0.0, rng), g);
}

TEST(Mutate, RateOneChangesEveryGene) {
  std::mt19937_64 rng(4);
  auto g = random_genotype(kLenet, Mode::kTwoObjective, rng);
  auto child = mutate(g, 1.0, rng);
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    for (std::size_t i = 0; i < g.layers[l].size(); ++i) {
      EXPECT_NE(child.layers[l][i], g.layers[l][i]);
      EXPECT_NE(child.layers[l][i], kRemoved);
    }
  }
}

TEST(Mutate, ChangedFractionMatchesRate) {
  std::mt19937_64 rng(5);
  const auto tmpl = tiny_template({100});
  int changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_genotype(tmpl, Mode::kTwoObjective, rng);
    auto child = mutate(g, 0.1, rng);
    for (std::size_t i = 0; i < 100; ++i) changed += child.layers[0][i] != g.layers[0][i];
  }
  const double sigma = std::sqrt(0.1 * 0.9 / 10000);
  EXPECT_LE(std::abs(changed / 10000.0 - 0.1), 3 * sigma);
}

TEST(Mutate, ResamplesUniformlyOverOtherValues) {
  std::mt19937_64 rng(6);
  for (Mode mode : {Mode::kTwoObjective, Mode::kThreeObjective}) {
    const int domain = mode == Mode::kTwoObjective ? 9 : 10;
    Genotype g{mode, {std::vector<std::uint8_t>(9000, 5), std::vector<std::uint8_t>(1, 1)}};
    auto child = mutate(g, 1.0, rng);
    std::map<int, int> counts;
    for (auto a : child.layers[0]) ++counts[a];
    EXPECT_EQ(counts.count(5), 0u);
    EXPECT_EQ(int(counts.size()), domain - 1);
    const double n = 9000, p = 1.0 / (domain - 1);
    for (auto [value, count] : counts) {
      EXPECT_LE(std::abs(count - n * p), 4 * std::sqrt(n * p * (1 - p))) << value;
    }
  }
}

TEST(Mutate, RepairsLayerThatLostEveryKernel) {
  // Single-slot layers at rate 1 in three-objective mode hit REMOVED with
  // probability 1/9 per step; the repair must refill them.
  std::mt19937_64 rng(7);
  const auto tmpl = tiny_template({1, 2});
  Genotype g{Mode::kThreeObjective, {{3}, {3, 0}}};
  int repaired = 0;
  for (int i = 0; i < 2000; ++i) {
    g = mutate(g, 1.0, rng);
    ASSERT_NO_THROW(validate(g, tmpl));
    repaired += g.layers[1][0] != kRemoved && g.layers[1][1] != kRemoved ? 0 : 1;
  }
  EXPECT_GT(repaired, 0);
}

TEST(Mutate, ChainsAlwaysDecode) {
  std::mt19937_64 rng(8);
  const auto tmpl = tiny_template({3, 2, 4});
  for (int chain = 0; chain < 10000; ++chain) {
    const Mode mode = chain % 2 ? Mode::kThreeObjective : Mode::kTwoObjective;
    auto g = random_genotype(tmpl, mode, rng);
    for (int step = 0; step < 5; ++step) {
      g = mutate(g, 0.5, rng);
      ASSERT_EQ(g.mode, mode);
      ASSERT_EQ(g.layers.size(), 3u);
      ASSERT_EQ(g.layers[0].size(), 3u);
      ASSERT_EQ(g.layers[1].size(), 2u);
      ASSERT_EQ(g.layers[2].size(), 4u);
      const auto spec = decode(g, tmpl);
      for (std::size_t l = 0; l < 3; ++l) {
        ASSERT_EQ(spec.conv_layers[l].out_channels(),
                  int(sorted(g.layers[l]).size()));
      }
    }
  }
}

TEST(Decode, AllFiveByFiveIsBenchmark) {
  const auto spec = decode(uniform_genotype(kLenet, 9), kLenet);
  ASSERT_EQ(spec.conv_layers.size(), 2u);
  EXPECT_EQ(spec.conv_layers[0].branches, (std::vector<BranchSpec>{{9, 5, 5, 32}}));
  EXPECT_EQ(spec.conv_layers[1].branches, (std::vector<BranchSpec>{{9, 5, 5, 64}}));
  EXPECT_TRUE(spec.conv_layers[0].pool_after);
  EXPECT_TRUE(spec.conv_layers[1].pool_after);
  EXPECT_EQ(spec.fc_width, 512);
  EXPECT_EQ(spec.num_classes, 10);
}

TEST(Decode, GroupsAllelesByShapeId) {
  const auto tmpl = tiny_template({4});
  const auto spec = decode(Genotype{Mode::kTwoObjective, {{1, 1, 3, 9}}}, tmpl);
  EXPECT_EQ(spec.conv_layers[0].branches,
            (std::vector<BranchSpec>{{1, 1, 1, 2}, {3, 3, 1, 1}, {9, 5, 5, 1}}));
  EXPECT_EQ(spec.conv_layers[0].out_channels(), 4);
}

TEST(Decode, RemovedKernelsAreDropped) {
  const auto tmpl = tiny_template({5});
  const auto spec = decode(Genotype{Mode::kThreeObjective, {{0, 0, 3, 3, 5}}}, tmpl);
  EXPECT_EQ(spec.conv_layers[0].branches,
            (std::vector<BranchSpec>{{3, 3, 1, 2}, {5, 1, 5, 1}}));
  EXPECT_EQ(spec.conv_layers[0].out_channels(), 3);
}

TEST(Decode, EmptyLayerIsInvariantViolation) {
  const auto tmpl = tiny_template({2});
  EXPECT_THROW(decode(Genotype{Mode::kThreeObjective, {{0, 0}}}, tmpl), ComputeError);
}

TEST(Validate, RejectsMalformedGenotypes) {
  const auto tmpl = tiny_template({2});
  EXPECT_THROW(validate(Genotype{Mode::kTwoObjective, {{1, 0}}}, tmpl), ConfigError);
  EXPECT_THROW(validate(Genotype{Mode::kTwoObjective, {{1, 2, 3}}}, tmpl), ConfigError);
  EXPECT_THROW(validate(Genotype{Mode::kTwoObjective, {{1, 2}, {1, 2}}}, tmpl), ConfigError);
  EXPECT_THROW(validate(Genotype{Mode::kThreeObjective, {{0, 0}}}, tmpl), ConfigError);
  EXPECT_THROW(validate(Genotype{Mode::kTwoObjective, {{1, 10}}}, tmpl), ConfigError);
  EXPECT_NO_THROW(validate(Genotype{Mode::kThreeObjective, {{0, 4}}}, tmpl));
}

TEST(CanonicalKey, PermutationInvariant) {
  EXPECT_EQ(canonical_key(Genotype{Mode::kTwoObjective, {{3, 9}}}),
            canonical_key(Genotype{Mode::kTwoObjective, {{9, 3}}}));
  EXPECT_NE(canonical_key(Genotype{Mode::kTwoObjective, {{3, 3, 9}}}),
            canonical_key(Genotype{Mode::kTwoObjective, {{3, 9, 9}}}));
  EXPECT_EQ(canonical_key(Genotype{Mode::kThreeObjective, {{0, 3, 9}}}),
            canonical_key(Genotype{Mode::kThreeObjective, {{3, 9, 0}}}));
}

TEST(CanonicalKey, EqualExactlyWhenMultisetsMatch) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(0, 2);
  const std::uint8_t alphabet[3] = {0, 3, 9};
  auto draw = [&] {
    Genotype g{Mode::kThreeObjective, {std::vector<std::uint8_t>(3), std::vector<std::uint8_t>(2)}};
    for (auto& layer : g.layers) {
      for (auto& a : layer) a = alphabet[pick(rng)];
    }
    return g;
  };
  int equal_pairs = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    const auto a = draw(), b = draw();
    const bool same_multisets = sorted(a.layers[0]) == sorted(b.layers[0]) &&
                                sorted(a.layers[1]) == sorted(b.layers[1]);
    ASSERT_EQ(canonical_key(a) == canonical_key(b), same_multisets);
    equal_pairs += same_multisets;
  }
  EXPECT_GT(equal_pairs, 100);
}

TEST(GenotypeJson, RoundTrip) {
  std::mt19937_64 rng(10);
  auto g = mutate(random_genotype(kLenet, Mode::kThreeObjective, rng), 0.3, rng);
  const nlohmann::json j = g;
  EXPECT_EQ(j.at("mode"), "three_obj");
  EXPECT_EQ(j.at("layers").size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(j.dump()).get<Genotype>(), g);
}

TEST(GenotypeJson, RejectsBadAlleles) {
  EXPECT_THROW(nlohmann::json::parse(R"({"mode":"two_obj","layers":[[1,12]]})").get<Genotype>(),
               ConfigError);
  EXPECT_THROW(nlohmann::json::parse(R"({"mode":"four_obj","layers":[[1]]})").get<Genotype>(),
               ConfigError);
  EXPECT_THROW(nlohmann::json::parse(R"({"layers":[[1]]})").get<Genotype>(), ConfigError);
}
