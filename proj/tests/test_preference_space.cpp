// SPDX-License-Identifier: Apache-2.0
#include <numeric>
#include <set>

#include "doctest.h"
#include "rlphf/preference_space.hpp"
#include "rlphf/rng.hpp"

using namespace rlphf;

namespace {

PreferenceSpace shaped(const std::vector<int>& sizes) {
  std::vector<DimensionSpec> dims;
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    DimensionSpec spec{"D" + std::to_string(d + 1), {}};
    for (int m = 0; m < sizes[d]; ++m) {
      spec.preferences.push_back(
          {"P" + std::to_string(d + 1) + static_cast<char>('A' + m), Objective::kSimple, ""});
    }
    dims.push_back(spec);
  }
  return PreferenceSpace(dims);
}

std::size_t product(const std::vector<int>& sizes) {
  std::size_t p = 1;
  for (int s : sizes) p *= static_cast<std::size_t>(s);
  return p;
}

}  // namespace

TEST_CASE("default space has three two-member dimensions") {
  const auto space = default_preference_space();
  CHECK(space.n_total_preferences() == 6);
  CHECK(space.combination_count() == 8);
  CHECK(space.symbols() == std::vector<std::string>{"P1A", "P1B", "P2A", "P2B", "P3A", "P3B"});
  CHECK(space.find("P3B").objective == Objective::kUnfriendly);
}

TEST_CASE("enumerate_combinations") {
  std::vector<std::string> codes;
  for (const auto& c : enumerate_combinations(default_preference_space())) codes.push_back(c.code);
  CHECK(codes == std::vector<std::string>{"AAA", "AAB", "ABA", "ABB", "BAA", "BAB", "BBA", "BBB"});

  const auto single = enumerate_combinations(shaped({1}));
  REQUIRE(single.size() == 1);
  CHECK(single[0].code == "A");

  CHECK(enumerate_combinations(extended_preference_space()).size() == 16);
}

TEST_CASE("combination_mask") {
  const auto space = default_preference_space();
  CHECK(combination_mask(space.combination_from_code("AAA"), space) ==
        PreferenceMask{1, 0, 1, 0, 1, 0});
  CHECK(combination_mask(space.combination_from_code("BBB"), space) ==
        PreferenceMask{0, 1, 0, 1, 0, 1});
  const auto one = shaped({2});
  CHECK(combination_mask(one.combination_from_code("A"), one) == PreferenceMask{1, 0});

  PreferenceCombination bad{{"P1A", "P2A", "P9Z"}, "AA?"};
  CHECK_THROWS_AS(combination_mask(bad, space), PreferenceError);
  PreferenceCombination misplaced{{"P2A", "P1A", "P3A"}, "AAA"};
  CHECK_THROWS_AS(combination_mask(misplaced, space), PreferenceError);
}

TEST_CASE("training and incremental cost") {
  using M = CompositionMethod;
  const auto t1 = default_preference_space();
  CHECK(training_cost(t1, M::kPromptedMorl) == 8);
  CHECK(training_cost(t1, M::kPersonalizedSoups) == 6);
  const auto ext = extended_preference_space();
  CHECK(training_cost(ext, M::kPromptedMorl) == 16);
  CHECK(training_cost(ext, M::kPersonalizedSoups) == 8);
  const auto unit = shaped({1});
  CHECK(training_cost(unit, M::kPromptedMorl) == 1);
  CHECK(training_cost(unit, M::kPersonalizedSoups) == 1);

  CHECK(incremental_cost(t1, ext, M::kPersonalizedSoups) == 2);
  CHECK(incremental_cost(t1, ext, M::kPromptedMorl) == 16);
  CHECK(incremental_cost(t1, t1, M::kPersonalizedSoups) == 0);
  CHECK(incremental_cost(t1, t1, M::kPromptedMorl) == 0);
  const auto grown = shaped({2, 2, 3});
  const auto base = shaped({2, 2, 2});
  CHECK(incremental_cost(base, grown, M::kPersonalizedSoups) == 1);
  CHECK(incremental_cost(base, grown, M::kPromptedMorl) == 12);
  CHECK_THROWS_AS(incremental_cost(ext, t1, M::kPersonalizedSoups), PreferenceError);
}

TEST_CASE("costs over random space shapes match closed forms") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> sizes(1 + rng.below(4));
    for (auto& s : sizes) s = 1 + static_cast<int>(rng.below(4));
    const auto space = shaped(sizes);
    const std::size_t n = static_cast<std::size_t>(std::accumulate(sizes.begin(), sizes.end(), 0));
    const std::size_t combos = product(sizes);
    CHECK(training_cost(space, CompositionMethod::kPersonalizedSoups) == n);
    CHECK(training_cost(space, CompositionMethod::kPromptedMorl) == combos);

    auto bigger = sizes;
    std::size_t added = 0;
    for (auto& s : bigger) {
      const int extra = static_cast<int>(rng.below(3));
      s += extra;
      added += static_cast<std::size_t>(extra);
    }
    const auto grown = shaped(bigger);
    CHECK(incremental_cost(space, grown, CompositionMethod::kPersonalizedSoups) == added);
    CHECK(incremental_cost(space, grown, CompositionMethod::kPromptedMorl) ==
          (added == 0 ? 0 : product(bigger)));
  }
}

TEST_CASE("prompted MORL never costs less than soups when dimensions conflict") {
  // Every dimension has at least two members; equality only for a single
  // dimension or the (2, 2) shape, where product and sum coincide.
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> sizes(1 + rng.below(4));
    for (auto& s : sizes) s = 2 + static_cast<int>(rng.below(3));
    const auto space = shaped(sizes);
    const auto morl = training_cost(space, CompositionMethod::kPromptedMorl);
    const auto soups = training_cost(space, CompositionMethod::kPersonalizedSoups);
    CHECK(morl >= soups);
    const bool equal_shape = sizes.size() == 1 || sizes == std::vector<int>{2, 2};
    CHECK((morl == soups) == equal_shape);
  }
}

TEST_CASE("combinations are distinct and masks round-trip") {
  for (const auto& space : {default_preference_space(), extended_preference_space(), shaped({3, 1, 2})}) {
    const auto combos = enumerate_combinations(space);
    CHECK(combos.size() == space.combination_count());
    std::set<std::string> codes;
    for (const auto& c : combos) {
      codes.insert(c.code);
      const auto mask = combination_mask(c, space);
      for (const auto& dim : space.dimensions()) {
        int set = 0;
        for (auto m : dim.members) set += mask[m];
        CHECK(set == 1);
      }
      CHECK(space.combination_from_mask(mask) == c);
    }
    CHECK(codes.size() == combos.size());
  }
}

TEST_CASE("space validation") {
  CHECK_THROWS_AS(PreferenceSpace(std::vector<DimensionSpec>{}), PreferenceError);
  CHECK_THROWS_AS(PreferenceSpace(std::vector<DimensionSpec>{DimensionSpec{"Empty", {}}}),
                  PreferenceError);
  CHECK_THROWS_AS(PreferenceSpace(std::vector<DimensionSpec>{
                      DimensionSpec{"X", {PreferenceSpec{"Q1A", Objective::kSimple, ""}}}}),
                  PreferenceError);
  CHECK_THROWS_AS(default_preference_space().find("P4A"), PreferenceError);
}

TEST_CASE("space JSON round trip") {
  const auto ext = extended_preference_space();
  CHECK(PreferenceSpace::from_json(ext.to_json()) == ext);
}
