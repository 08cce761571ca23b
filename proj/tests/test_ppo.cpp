// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rlphf/ppo.hpp"
#include "test_support.hpp"

using namespace rlphf;

namespace {

struct Fixture {
  PolicyArchitecture arch = testing::small_arch();
  ParameterVector params = init_policy(arch, 4, 1.0);
  ParameterVector ref = init_policy(arch, 5, 1.0);
  std::vector<Prompt> prompts;
  MaskFn masks = [](std::size_t i, Rng&) {
    return PreferenceMask{static_cast<std::uint8_t>(i % 2), 0, 1, 0};
  };

  explicit Fixture(int n) {
    for (int i = 0; i < n; ++i) prompts.push_back(testing::small_prompt(i % 3));
  }
};

// Reward that depends on length and the first token.
double toy_reward(const Prompt&, std::span<const std::uint8_t>, const Response& r) {
  return 0.1 * static_cast<double>(r.tokens.size()) + (r.tokens[0] == 2 ? 1.0 : 0.0);
}

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

TEST_CASE("clip arithmetic") {
  CHECK(clipped_objective(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_objective(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_objective(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_objective(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(clipped_objective(1.1, 2.0, 0.2) == doctest::Approx(2.2));
}

TEST_CASE("EMA baseline follows the recursion") {
  const std::vector<double> means{1.0, 3.0, -2.0, 0.5, 4.0};
  EmaBaseline ema(0.9);
  CHECK_FALSE(ema.value().has_value());
  double b = means[0];
  CHECK(ema.update(means[0]) == b);
  for (std::size_t k = 1; k < means.size(); ++k) {
    b = 0.9 * b + 0.1 * means[k];
    CHECK(ema.update(means[k]) == doctest::Approx(b).epsilon(1e-15));
  }
  EmaBaseline seeded(0.5, 2.0);
  CHECK(seeded.update(4.0) == doctest::Approx(3.0));
}

TEST_CASE("running normalizer matches two-pass statistics") {
  Rng rng(3);
  RunningNormalizer n;
  std::vector<double> xs;
  for (int i = 0; i < 500; ++i) {
    xs.push_back(rng.uniform() * 10.0 - 3.0);
    n.observe(xs.back());
  }
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (xs.size() - 1));
  CHECK(n.mean() == doctest::Approx(mean));
  CHECK(n.stddev() == doctest::Approx(sd));
  CHECK(n.normalize(mean + 2 * sd) == doctest::Approx(2.0));
  RunningNormalizer one;
  one.observe(5.0);
  CHECK(one.normalize(5.0) == 0.0);
}

TEST_CASE("zero KL coefficient leaves rewards unpenalized") {
  Fixture f(24);
  PPOConfig config;
  config.kl_coef = 0.0;
  RewardShaping shaping{EmaBaseline(0.9), std::nullopt};
  const auto batch =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 1, shaping);
  REQUIRE(batch.rollouts.size() == 24);
  for (const auto& r : batch.rollouts) {
    CHECK(r.penalized_reward == r.raw_reward);
    CHECK(r.behavior_logprob <= 0.0);
    CHECK(r.raw_reward == toy_reward(r.prompt, r.mask, r.response));
  }
}

TEST_CASE("reference policy has no KL penalty under itself") {
  Fixture f(24);
  PPOConfig config;
  config.kl_coef = 0.7;
  RewardShaping shaping{EmaBaseline(0.9), std::nullopt};
  const auto batch = collect_rollouts(f.arch, f.params, f.params, toy_reward, f.prompts, f.masks,
                                      config, 2, shaping);
  for (const auto& r : batch.rollouts) {
    CHECK(r.behavior_logprob == r.ref_logprob);
    CHECK(r.penalized_reward == r.raw_reward);
  }
  CHECK(batch.mean_kl() == 0.0);
}

TEST_CASE("advantages subtract the post-update baseline") {
  Fixture f(16);
  PPOConfig config;
  RewardShaping shaping{EmaBaseline(0.9), std::nullopt};
  const auto b1 =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 3, shaping);
  double m1 = 0.0;
  for (const auto& r : b1.rollouts) m1 += r.penalized_reward / 16.0;
  CHECK(b1.baseline == doctest::Approx(m1));
  const auto b2 =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 4, shaping);
  double m2 = 0.0;
  for (const auto& r : b2.rollouts) m2 += r.penalized_reward / 16.0;
  CHECK(b2.baseline == doctest::Approx(0.9 * m1 + 0.1 * m2));
  for (const auto& r : b2.rollouts) {
    CHECK(r.advantage == doctest::Approx(r.penalized_reward - b2.baseline));
  }
}

TEST_CASE("normalized rewards are z-scored with the current batch included") {
  Fixture f(32);
  PPOConfig config;
  config.kl_coef = 0.0;
  RewardShaping shaping{EmaBaseline(0.9), RunningNormalizer{}};
  const auto batch =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 5, shaping);
  double mean = 0.0;
  for (const auto& r : batch.rollouts) mean += r.raw_reward / 32.0;
  double ss = 0.0;
  for (const auto& r : batch.rollouts) ss += (r.raw_reward - mean) * (r.raw_reward - mean);
  const double sd = std::sqrt(ss / 31.0);
  for (const auto& r : batch.rollouts) {
    CHECK(r.penalized_reward == doctest::Approx((r.raw_reward - mean) / sd));
  }
}

TEST_CASE("on-policy surrogate equals the mean advantage") {
  Fixture f(20);
  PPOConfig config;
  RewardShaping shaping{EmaBaseline(0.9, 0.0), std::nullopt};
  const auto batch =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 6, shaping);
  double mean_adv = 0.0;
  for (const auto& r : batch.rollouts) mean_adv += r.advantage / 20.0;
  CHECK(surrogate_objective(f.arch, f.params, batch, 0.2) == doctest::Approx(mean_adv));
}

TEST_CASE("surrogate gradient matches central differences") {
  Fixture f(8);
  PPOConfig config;
  RewardShaping shaping{EmaBaseline(0.9, 0.0), std::nullopt};
  const auto batch =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 7, shaping);
  const auto grad = surrogate_gradient(f.arch, f.params, batch, 0.2);
  auto obj = [&](const std::vector<double>& x) {
    return surrogate_objective(f.arch, ParameterVector{x, f.params.fingerprint}, batch, 0.2);
  };
  Rng rng(8);
  int checked = 0;
  for (int k = 0; k < 40 && checked < 10; ++k) {
    const std::size_t i = rng.below(f.params.size());
    const double numeric = testing::central_difference(obj, f.params.values, i);
    if (std::abs(numeric) < 1e-8 && std::abs(grad.values[i]) < 1e-8) continue;
    CHECK(testing::relative_error(grad.values[i], numeric) <= 1e-4);
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("clipped rollouts contribute no gradient") {
  Fixture f(8);
  PPOConfig config;
  RewardShaping shaping{EmaBaseline(0.9, 0.0), std::nullopt};
  auto batch =
      collect_rollouts(f.arch, f.params, f.ref, toy_reward, f.prompts, f.masks, config, 9, shaping);
  // ratio exp(2) is far above 1 + clip, so positive advantages are clipped
  for (auto& r : batch.rollouts) {
    r.behavior_logprob -= 2.0;
    r.advantage = 1.0;
  }
  const auto grad = surrogate_gradient(f.arch, f.params, batch, 0.2);
  for (double g : grad.values) CHECK(g == 0.0);
  for (auto& r : batch.rollouts) r.advantage = -1.0;
  CHECK(norm(surrogate_gradient(f.arch, f.params, batch, 0.2).values) > 0.0);
}

TEST_CASE("centered constant rewards give shrinking updates") {
  Fixture f(1);
  PPOConfig config;
  config.kl_coef = 0.0;
  auto constant = [](const Prompt&, std::span<const std::uint8_t>, const Response&) { return 1.0; };
  auto mean_norm = [&](int n) {
    std::vector<Prompt> prompts(static_cast<std::size_t>(n), testing::small_prompt(1));
    double total = 0.0;
    for (std::uint64_t s = 0; s < 6; ++s) {
      // a stale baseline leaves a constant advantage of 0.9
      RewardShaping shaping{EmaBaseline(0.9, 0.0), std::nullopt};
      const auto batch =
          collect_rollouts(f.arch, f.params, f.ref, constant, prompts, f.masks, config, s, shaping);
      total += norm(surrogate_gradient(f.arch, f.params, batch, 0.2).values);
    }
    return total / 6.0;
  };
  const double small = mean_norm(16);
  const double large = mean_norm(1024);
  CHECK(large < small / 3.0);

  RewardShaping fresh{EmaBaseline(0.9), std::nullopt};
  std::vector<Prompt> prompts(32, testing::small_prompt(0));
  const auto batch =
      collect_rollouts(f.arch, f.params, f.ref, constant, prompts, f.masks, config, 1, fresh);
  for (const auto& r : batch.rollouts) CHECK(r.advantage == 0.0);
}

TEST_CASE("snapshot selection") {
  const std::vector<double> r{0.1, 0.5, 0.3, 0.5, -1.0};
  CHECK(select_best_snapshot(r) == 1);
  const std::vector<double> one{2.0};
  CHECK(select_best_snapshot(one) == 0);
  CHECK_THROWS_AS(select_best_snapshot({}), std::invalid_argument);
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> xs(1 + rng.below(12));
    for (auto& x : xs) x = std::floor(rng.uniform() * 5.0);
    const auto best = select_best_snapshot(xs);
    CHECK(xs[best] == *std::max_element(xs.begin(), xs.end()));
    for (std::size_t i = 0; i < best; ++i) CHECK(xs[i] < xs[best]);
  }
}

TEST_CASE("zero steps return the initial parameters") {
  Fixture f(4);
  PPOConfig config;
  config.steps = 0;
  const std::vector<Prompt> eval{testing::small_prompt(0)};
  const auto result = train_single_objective(f.arch, f.params, f.ref, toy_reward,
                                             PreferenceMask{1, 0, 0, 0}, f.prompts, eval, config, 1);
  CHECK(result.params == f.params);
  CHECK(result.selected_step == 0);
  CHECK(result.episodes == 0);
  CHECK(result.snapshot_steps == std::vector<int>{0});
}

TEST_CASE("config validation") {
  PPOConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.kl_coef = -0.1;
  CHECK_THROWS(c.validate());
  c = {};
  c.rollouts_per_step = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.steps = 7;
  CHECK(PPOConfig::from_json(c.to_json()).steps == 7);
  PPOConfig defaults;
  defaults.learning_rate = 0.5;
  CHECK(PPOConfig::from_json({{"steps", 3}}, defaults).learning_rate == 0.5);
  CHECK(PPOConfig::from_json({{"steps", 3}}, defaults).steps == 3);
}

TEST_CASE("training on oracle rewards moves the policy") {
  const auto& base = testing::shared_base();
  const RunConfig config;
  const auto space = default_preference_space();
  const auto& env = config.env;
  const auto stream = draw_prompts(env, config.ppo.steps * config.ppo.rollouts_per_step, 7);
  const auto held = heldout_prompts(env);
  const auto& arch = base.architecture;

  auto train = [&](const std::string& sym) {
    const auto pref = space.find(sym);
    RewardFn oracle = [pref, &env](const Prompt& p, std::span<const std::uint8_t>,
                                   const Response& r) {
      return preference_score(pref, compute_stats(r, p, env));
    };
    return train_single_objective(arch, base.params, base.params, oracle,
                                  single_preference_mask(sym, space), stream, held, config.ppo,
                                  derive_seed(11, sym));
  };

  SUBCASE("concise policy shortens responses") {
    const auto mask = single_preference_mask("P2A", space);
    const auto result = train("P2A");
    double base_len = 0.0, trained_len = 0.0;
    int n = 0;
    for (int round = 0; round < 8; ++round) {
      for (const auto& p : held) {
        const auto seed = derive_seed(99, "len", static_cast<std::uint64_t>(n++));
        base_len += sample_response(arch, base.params, p, mask, seed, 0.7).effective_length(31);
        trained_len += sample_response(arch, result.params, p, mask, seed, 0.7).effective_length(31);
      }
    }
    base_len /= n;
    trained_len /= n;
    INFO("base " << base_len << " trained " << trained_len);
    CHECK(base_len - trained_len >= 0.2 * env.max_length);
  }

  SUBCASE("technical policy beats the base") {
    const auto mask = single_preference_mask("P1B", space);
    const auto result = train("P1B");
    const auto& pref = space.find("P1B");
    int wins = 0, losses = 0, n = 0;
    for (int round = 0; round < 8; ++round) {
      for (const auto& p : held) {
        const auto seed = derive_seed(98, "battle", static_cast<std::uint64_t>(n++));
        const auto a = sample_response(arch, result.params, p, mask, seed, 0.7);
        const auto b = sample_response(arch, base.params, p, mask, seed, 0.7);
        const auto v = oracle_judge(pref, a, b, p, env);
        wins += v == Verdict::kWin;
        losses += v == Verdict::kLose;
      }
    }
    INFO(wins << "/" << losses);
    CHECK(static_cast<double>(wins) / (wins + losses) >= 0.7);
  }
}
