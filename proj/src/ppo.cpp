// SPDX-License-Identifier: Apache-2.0
#include "rlphf/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rlphf {

void PPOConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("ppo: clip must be in (0, 1)");
  if (kl_coef < 0.0) throw std::invalid_argument("ppo: kl_coef must be >= 0");
  if (steps < 0 || rollouts_per_step < 1 || eval_every < 1 || eval_rounds < 1) {
    throw std::invalid_argument("ppo: step and rollout counts must be positive");
  }
  if (!(learning_rate > 0.0) || !(temperature > 0.0) || !(eval_temperature > 0.0)) {
    throw std::invalid_argument("ppo: learning rate and temperatures must be positive");
  }
  if (baseline_decay < 0.0 || baseline_decay > 1.0) {
    throw std::invalid_argument("ppo: baseline_decay must be in [0, 1]");
  }
}

nlohmann::json PPOConfig::to_json() const {
  return {{"clip", clip},
          {"kl_coef", kl_coef},
          {"steps", steps},
          {"rollouts_per_step", rollouts_per_step},
          {"learning_rate", learning_rate},
          {"baseline_decay", baseline_decay},
          {"temperature", temperature},
          {"eval_every", eval_every},
          {"eval_rounds", eval_rounds},
          {"eval_temperature", eval_temperature}};
}

PPOConfig PPOConfig::from_json(const nlohmann::json& j) { return from_json(j, PPOConfig{}); }

PPOConfig PPOConfig::from_json(const nlohmann::json& j, const PPOConfig& defaults) {
  PPOConfig c = defaults;
  c.clip = j.value("clip", c.clip);
  c.kl_coef = j.value("kl_coef", c.kl_coef);
  c.steps = j.value("steps", c.steps);
  c.rollouts_per_step = j.value("rollouts_per_step", c.rollouts_per_step);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.baseline_decay = j.value("baseline_decay", c.baseline_decay);
  c.temperature = j.value("temperature", c.temperature);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_rounds = j.value("eval_rounds", c.eval_rounds);
  c.eval_temperature = j.value("eval_temperature", c.eval_temperature);
  c.validate();
  return c;
}

double RolloutBatch::mean_raw_reward() const {
  if (rollouts.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rollouts) s += r.raw_reward;
  return s / static_cast<double>(rollouts.size());
}

double RolloutBatch::mean_kl() const {
  if (rollouts.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rollouts) s += r.behavior_logprob - r.ref_logprob;
  return s / static_cast<double>(rollouts.size());
}

double EmaBaseline::update(double batch_mean) {
  value_ = value_ ? decay_ * *value_ + (1.0 - decay_) * batch_mean : batch_mean;
  return *value_;
}

void RunningNormalizer::observe(double x) {
  ++n_;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
}

double RunningNormalizer::stddev() const {
  return n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1)) : 0.0;
}

double RunningNormalizer::normalize(double x) const {
  return (x - mean_) / std::max(stddev(), 1e-6);
}

RolloutBatch collect_rollouts(const PolicyArchitecture& arch, const ParameterVector& params,
                              const ParameterVector& ref_params, const RewardFn& reward_fn,
                              std::span<const Prompt> prompts, const MaskFn& mask_fn,
                              const PPOConfig& config, std::uint64_t seed,
                              RewardShaping& shaping) {
  RolloutBatch batch;
  batch.rollouts.reserve(prompts.size());
  Rng mask_rng(derive_seed(seed, "masks"));
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Rollout r;
    r.prompt = prompts[i];
    r.mask = mask_fn(i, mask_rng);
    r.response = sample_response(arch, params, r.prompt, r.mask, derive_seed(seed, "rollout", i),
                                 config.temperature);
    r.behavior_logprob =
        sequence_logprob(arch, params, r.prompt, r.mask, r.response, config.temperature);
    r.ref_logprob =
        sequence_logprob(arch, ref_params, r.prompt, r.mask, r.response, config.temperature);
    r.raw_reward = reward_fn(r.prompt, r.mask, r.response);
    batch.rollouts.push_back(std::move(r));
  }
  if (shaping.normalizer) {
    for (const auto& r : batch.rollouts) shaping.normalizer->observe(r.raw_reward);
  }
  double mean = 0.0;
  for (auto& r : batch.rollouts) {
    const double shaped = shaping.normalizer ? shaping.normalizer->normalize(r.raw_reward)
                                             : r.raw_reward;
    r.penalized_reward = shaped - config.kl_coef * (r.behavior_logprob - r.ref_logprob);
    mean += r.penalized_reward;
  }
  if (!batch.rollouts.empty()) mean /= static_cast<double>(batch.rollouts.size());
  batch.baseline = shaping.baseline.update(mean);
  for (auto& r : batch.rollouts) r.advantage = r.penalized_reward - batch.baseline;
  return batch;
}

double clipped_objective(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

double surrogate_objective(const PolicyArchitecture& arch, const ParameterVector& params,
                           const RolloutBatch& batch, double clip, double temperature) {
  if (batch.rollouts.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : batch.rollouts) {
    const double lp = sequence_logprob(arch, params, r.prompt, r.mask, r.response, temperature);
    s += clipped_objective(std::exp(lp - r.behavior_logprob), r.advantage, clip);
  }
  return s / static_cast<double>(batch.rollouts.size());
}

ParameterVector surrogate_gradient(const PolicyArchitecture& arch, const ParameterVector& params,
                                   const RolloutBatch& batch, double clip, double temperature) {
  ParameterVector grad{std::vector<double>(params.size(), 0.0), params.fingerprint};
  if (batch.rollouts.empty()) return grad;
  const double inv = 1.0 / static_cast<double>(batch.rollouts.size());
  for (const auto& r : batch.rollouts) {
    const double lp = sequence_logprob(arch, params, r.prompt, r.mask, r.response, temperature);
    const double ratio = std::exp(lp - r.behavior_logprob);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    // The min picks the clipped branch (zero gradient) only when it is
    // strictly smaller.
    if (clipped * r.advantage < ratio * r.advantage) continue;
    accumulate_logprob_grad(arch, params, r.prompt, r.mask, r.response, temperature,
                            inv * ratio * r.advantage, grad.values);
  }
  return grad;
}

ParameterVector ppo_update(const PolicyArchitecture& arch, const ParameterVector& params,
                           const RolloutBatch& batch, const PPOConfig& config, AdamState& adam) {
  const auto grad = surrogate_gradient(arch, params, batch, config.clip, config.temperature);
  if (!grad.all_finite()) {
    double worst_adv = 0.0;
    for (const auto& r : batch.rollouts) worst_adv = std::max(worst_adv, std::abs(r.advantage));
    std::ostringstream msg;
    msg << "ppo_update: non-finite surrogate gradient (batch " << batch.rollouts.size()
        << " rollouts, baseline " << batch.baseline << ", max |advantage| " << worst_adv << ")";
    throw std::runtime_error(msg.str());
  }
  ParameterVector next = params;
  adam_ascend(next.values, grad.values, adam, config.learning_rate);
  if (!next.all_finite()) throw std::runtime_error("ppo_update: parameters became non-finite");
  return next;
}

std::size_t select_best_snapshot(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("select_best_snapshot: no snapshots");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best]) best = i;
  }
  return best;
}

PPOResult train_ppo(const PolicyArchitecture& arch, const ParameterVector& init,
                    const ParameterVector& ref_params, const RewardFn& reward_fn,
                    const MaskFn& mask_fn, std::span<const Prompt> prompt_stream,
                    std::span<const EvalCase> eval_cases, const PPOConfig& config,
                    std::uint64_t seed, bool normalize_rewards) {
  config.validate();
  check_compatible(arch, init);
  check_compatible(arch, ref_params);
  if (prompt_stream.empty()) throw std::invalid_argument("train_ppo: empty prompt stream");

  auto evaluate = [&](const ParameterVector& p) {
    if (eval_cases.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : eval_cases) {
      const auto resp = sample_response(arch, p, c.prompt, c.mask, c.seed, config.eval_temperature);
      s += reward_fn(c.prompt, c.mask, resp);
    }
    return s / static_cast<double>(eval_cases.size());
  };

  PPOResult result;
  ParameterVector params = init;
  ParameterVector best = init;
  double best_reward = evaluate(init);
  result.snapshot_steps.push_back(0);
  result.snapshot_rewards.push_back(best_reward);
  result.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), 0.0, best_reward});

  AdamState adam;
  RewardShaping shaping{EmaBaseline(config.baseline_decay), std::nullopt};
  if (normalize_rewards) shaping.normalizer = RunningNormalizer{};
  const auto R = static_cast<std::size_t>(config.rollouts_per_step);
  std::vector<Prompt> slice(R);
  for (int step = 0; step < config.steps; ++step) {
    for (std::size_t i = 0; i < R; ++i) {
      slice[i] = prompt_stream[(static_cast<std::size_t>(step) * R + i) % prompt_stream.size()];
    }
    const auto batch = collect_rollouts(arch, params, ref_params, reward_fn, slice, mask_fn,
                                        config, derive_seed(seed, "ppo-step", static_cast<std::uint64_t>(step)),
                                        shaping);
    params = ppo_update(arch, params, batch, config, adam);
    result.episodes += batch.rollouts.size();
    CurveRow row{step + 1, batch.mean_raw_reward(), batch.mean_kl(),
                 std::numeric_limits<double>::quiet_NaN()};
    if ((step + 1) % config.eval_every == 0 || step + 1 == config.steps) {
      row.eval_reward = evaluate(params);
      result.snapshot_steps.push_back(step + 1);
      result.snapshot_rewards.push_back(row.eval_reward);
      if (row.eval_reward > best_reward) {
        best_reward = row.eval_reward;
        best = params;
      }
    }
    result.curve.push_back(row);
  }
  const auto idx = select_best_snapshot(result.snapshot_rewards);
  result.selected_step = result.snapshot_steps[idx];
  result.params = std::move(best);
  return result;
}

PPOResult train_single_objective(const PolicyArchitecture& arch, const ParameterVector& base,
                                 const ParameterVector& ref_params, const RewardFn& reward_fn,
                                 const PreferenceMask& mask, std::span<const Prompt> prompt_stream,
                                 std::span<const Prompt> eval_prompts, const PPOConfig& config,
                                 std::uint64_t seed, bool normalize_rewards) {
  std::vector<EvalCase> cases;
  for (int round = 0; round < config.eval_rounds; ++round) {
    for (const auto& p : eval_prompts) {
      cases.push_back({p, mask, derive_seed(seed, "snapshot-eval", cases.size())});
    }
  }
  MaskFn fixed = [&mask](std::size_t, Rng&) { return mask; };
  return train_ppo(arch, base, ref_params, reward_fn, fixed, prompt_stream, cases, config, seed,
                   normalize_rewards);
}

std::string curve_csv(std::span<const CurveRow> curve) {
  std::ostringstream out;
  out.precision(9);
  out << "step,mean_raw_reward,kl,eval_reward\n";
  for (const auto& r : curve) {
    out << r.step << ',';
    if (!std::isnan(r.mean_raw_reward)) out << r.mean_raw_reward;
    out << ',' << r.kl << ',';
    if (!std::isnan(r.eval_reward)) out << r.eval_reward;
    out << '\n';
  }
  return out.str();
}

}  // namespace rlphf
