// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rlphf/env.hpp"
#include "rlphf/ppo.hpp"
#include "rlphf/preference_space.hpp"
#include "rlphf/reward_model.hpp"

namespace rlphf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scripted behavior the base policy is cloned from. Per token, with
/// probability `exhibit_probability` the token comes from the favored class
/// of a uniformly chosen active token-class preference; otherwise from the
/// base mixture below (the remainder of the mass after the listed classes
/// goes to non-target CONTENT). Lengths follow the same two-branch rule.
struct DemonstratorConfig {
  double exhibit_probability = 0.3;
  double target_probability = 0.25;
  double simple_probability = 0.1;
  double technical_probability = 0.1;
  double style_probability = 0.075;
  int min_length = 6;
  int max_length = 16;
  int concise_min = 2;
  int concise_max = 6;
  int verbose_min = 16;
  int verbose_max = 22;
  /// Probability that a training mask activates a member of a dimension.
  double mask_dimension_probability = 0.5;

  nlohmann::json to_json() const;
  static DemonstratorConfig from_json(const nlohmann::json& j);
};

struct PretrainConfig {
  DemonstratorConfig demonstrator;
  int steps = 600;
  int batch_size = 32;
  double learning_rate = 1e-2;
  int hidden_width = 64;
  int embed_dim = 16;
  double init_scale = 1.0;

  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct FeedbackConfig {
  int prompt_draws = 2000;
  int general_prompt_draws = 2000;
  double rollout_temperature = 1.2;

  nlohmann::json to_json() const;
  static FeedbackConfig from_json(const nlohmann::json& j);
};

/// Behavior cloning on oracle-selected winners.
struct MtConfig {
  int epochs = 1;
  int batch_size = 32;
  double learning_rate = 3e-3;

  nlohmann::json to_json() const;
  static MtConfig from_json(const nlohmann::json& j);
};

struct EvalConfig {
  double temperature = 0.7;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct RunConfig {
  std::string experiment = "default";
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  EnvironmentConfig env;
  PreferenceSpace space = default_preference_space();
  /// Space used by the scaling experiment; must contain every preference of
  /// `space`.
  PreferenceSpace extended_space = extended_preference_space();
  PretrainConfig pretrain;
  FeedbackConfig feedback;
  RewardTrainConfig reward_model;
  /// PPO settings of the single-preference experts. Gentler than the
  /// PPOConfig defaults so that experts stay close enough to the base for
  /// their soups to compose.
  PPOConfig ppo{.kl_coef = 0.1, .learning_rate = 1e-3};
  /// PPO settings of the multi-objective (P-MORL) and general RLHF runs.
  PPOConfig pmorl;
  PPOConfig rlhf;
  MtConfig mt;
  EvalConfig eval;

  nlohmann::json to_json() const;
  /// Missing keys take defaults; unknown top-level keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON dump, 16 hex digits.
  std::string hash() const;
};

/// Reads a JSON config file. Throws ConfigError naming the file on I/O,
/// parse or validation failure.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace rlphf
