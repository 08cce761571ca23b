// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlphf/env.hpp"
#include "rlphf/optim.hpp"
#include "rlphf/policy.hpp"
#include "rlphf/rng.hpp"

namespace rlphf {

struct PPOConfig {
  double clip = 0.2;
  double kl_coef = 0.05;
  int steps = 100;
  int rollouts_per_step = 64;
  double learning_rate = 3e-3;
  double baseline_decay = 0.9;
  double temperature = 1.0;
  /// Snapshot and evaluate every this many updates (step 0 included).
  int eval_every = 10;
  /// Decoding rounds per held-out prompt during snapshot evaluation.
  int eval_rounds = 2;
  double eval_temperature = 0.7;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  nlohmann::json to_json() const;
  static PPOConfig from_json(const nlohmann::json& j);
  /// Keys missing from `j` keep the value in `defaults`.
  static PPOConfig from_json(const nlohmann::json& j, const PPOConfig& defaults);
};

struct Rollout {
  Prompt prompt;
  PreferenceMask mask;
  Response response;
  double behavior_logprob = 0.0;
  double ref_logprob = 0.0;
  double raw_reward = 0.0;
  /// Shaped reward minus beta * (behavior_logprob - ref_logprob).
  double penalized_reward = 0.0;
  double advantage = 0.0;
};

struct RolloutBatch {
  std::vector<Rollout> rollouts;
  double baseline = 0.0;

  double mean_raw_reward() const;
  /// Mean sequence log-ratio against the reference (Monte-Carlo KL).
  double mean_kl() const;
};

/// Scalar baseline b_k = decay * b_{k-1} + (1 - decay) * mean_k. Without an
/// initial value the first batch mean seeds it.
class EmaBaseline {
 public:
  explicit EmaBaseline(double decay, std::optional<double> initial = std::nullopt)
      : decay_(decay), value_(initial) {}
  double update(double batch_mean);
  std::optional<double> value() const { return value_; }

 private:
  double decay_;
  std::optional<double> value_;
};

/// Welford running mean/variance used to z-score a reward model's outputs.
class RunningNormalizer {
 public:
  void observe(double x);
  double normalize(double x) const;
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double stddev() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct RewardShaping {
  EmaBaseline baseline;
  /// When set, raw rewards are z-scored with statistics that include the
  /// current batch.
  std::optional<RunningNormalizer> normalizer;
};

using RewardFn =
    std::function<double(const Prompt&, std::span<const std::uint8_t> mask, const Response&)>;
/// Conditioning mask for rollout `index`, drawing from `rng` if it needs to.
using MaskFn = std::function<PreferenceMask(std::size_t index, Rng& rng)>;

/// Samples one rollout per prompt, scores it and assigns advantages.
RolloutBatch collect_rollouts(const PolicyArchitecture& arch, const ParameterVector& params,
                              const ParameterVector& ref_params, const RewardFn& reward_fn,
                              std::span<const Prompt> prompts, const MaskFn& mask_fn,
                              const PPOConfig& config, std::uint64_t seed,
                              RewardShaping& shaping);

/// Per-rollout clipped objective min(rho * A, clip(rho, 1 - eps, 1 + eps) * A).
double clipped_objective(double ratio, double advantage, double clip);

/// Mean clipped objective over the batch with rho = exp(logp_new - logp_behavior).
double surrogate_objective(const PolicyArchitecture& arch, const ParameterVector& params,
                           const RolloutBatch& batch, double clip, double temperature = 1.0);
ParameterVector surrogate_gradient(const PolicyArchitecture& arch, const ParameterVector& params,
                                   const RolloutBatch& batch, double clip,
                                   double temperature = 1.0);

/// One Adam ascent step on the surrogate. Throws std::runtime_error with
/// diagnostics if the gradient is not finite.
ParameterVector ppo_update(const PolicyArchitecture& arch, const ParameterVector& params,
                           const RolloutBatch& batch, const PPOConfig& config, AdamState& adam);

struct EvalCase {
  Prompt prompt;
  PreferenceMask mask;
  std::uint64_t seed = 0;
};

struct CurveRow {
  int step = 0;
  double mean_raw_reward = 0.0;
  double kl = 0.0;
  /// NaN on steps without a snapshot.
  double eval_reward = 0.0;
};

struct PPOResult {
  ParameterVector params;
  int selected_step = 0;
  std::vector<int> snapshot_steps;
  std::vector<double> snapshot_rewards;
  std::vector<CurveRow> curve;
  std::size_t episodes = 0;
};

/// Index of the highest reward; the earliest wins ties. Throws on empty input.
std::size_t select_best_snapshot(std::span<const double> rewards);

/// Runs config.steps updates starting from `init`, consuming prompts from
/// `prompt_stream` in order (wrapping around), and returns the snapshot with
/// the highest mean raw reward on `eval_cases`.
PPOResult train_ppo(const PolicyArchitecture& arch, const ParameterVector& init,
                    const ParameterVector& ref_params, const RewardFn& reward_fn,
                    const MaskFn& mask_fn, std::span<const Prompt> prompt_stream,
                    std::span<const EvalCase> eval_cases, const PPOConfig& config,
                    std::uint64_t seed, bool normalize_rewards);

/// Fixed-mask PPO run for a single preference.
PPOResult train_single_objective(const PolicyArchitecture& arch, const ParameterVector& base,
                                 const ParameterVector& ref_params, const RewardFn& reward_fn,
                                 const PreferenceMask& mask, std::span<const Prompt> prompt_stream,
                                 std::span<const Prompt> eval_prompts, const PPOConfig& config,
                                 std::uint64_t seed, bool normalize_rewards = true);

/// "step,mean_raw_reward,kl,eval_reward" rows; eval_reward empty when absent.
std::string curve_csv(std::span<const CurveRow> curve);

}  // namespace rlphf
