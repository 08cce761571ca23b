// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rlphf/env.hpp"
#include "rlphf/feedback.hpp"
#include "rlphf/policy.hpp"

namespace rlphf {

inline constexpr int kRewardLayoutVersion = 1;

/// Response statistics fed to reward models, in order: count/L for each of
/// the 7 text classes, class fraction for each of them, length fraction, and
/// target-token count/L.
inline constexpr int kRewardStatFeatures = 2 * static_cast<int>(kTextClassCount) + 2;

/// Scalar scorer over [topic one-hot | statistics | preference one-hot].
/// The preference block exists only in the multitask variant.
///
/// Flat layout, version 1: w_in (hidden x input), b_in (hidden),
/// w_out (hidden), b_out (1).
struct RewardArchitecture {
  int prompt_count = 11;
  int preference_count = 0;
  int hidden_width = 32;

  int input_width() const { return prompt_count + kRewardStatFeatures + preference_count; }
  std::size_t parameter_count() const;
  std::uint64_t fingerprint() const;
  void validate() const;

  nlohmann::json to_json() const;
  static RewardArchitecture from_json(const nlohmann::json& j);

  bool operator==(const RewardArchitecture&) const = default;
};

struct RewardModel {
  RewardArchitecture architecture;
  ParameterVector params;
  /// Multitask: one-hot order of the preference block. Otherwise the single
  /// symbol the model scores (kGeneralSymbol for helpfulness).
  std::vector<std::string> preference_symbols;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json provenance = nlohmann::json::object();

  bool multitask() const { return architecture.preference_count > 0; }
  /// Slot of `symbol` in the preference block. Throws if the model does not
  /// score that preference.
  std::size_t preference_slot(std::string_view symbol) const;
};

/// Input vector for (prompt, response) conditioned on `symbol`.
std::vector<double> reward_features(const RewardModel& model, const Prompt& prompt,
                                    const Response& response, std::string_view symbol,
                                    const EnvironmentConfig& env);

double score_features(const RewardArchitecture& arch, const ParameterVector& params,
                      std::span<const double> features);

double score(const RewardModel& model, const Prompt& prompt, const Response& response,
             std::string_view symbol, const EnvironmentConfig& env);

struct RewardPair {
  std::vector<double> winner;
  std::vector<double> loser;
};

struct LossGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

/// Mean over pairs of -log sigmoid(score(winner) - score(loser)) and its exact
/// gradient. Throws std::invalid_argument on an empty batch.
LossGradient bt_loss_and_grad(const RewardArchitecture& arch, const ParameterVector& params,
                              std::span<const RewardPair> batch);

/// Index of the output bias; adding c there shifts every score by c.
std::size_t output_bias_index(const RewardArchitecture& arch);

enum class RewardVariant { kMultitask, kPerPreference };

struct RewardTrainConfig {
  int hidden_width = 32;
  double learning_rate = 3e-2;
  int batch_size = 1;
  double init_scale = 1.0;

  nlohmann::json to_json() const;
  static RewardTrainConfig from_json(const nlohmann::json& j);
};

struct RewardTrainResult {
  RewardModel model;
  /// Mean BT loss over the epoch, measured before each update.
  double mean_epoch_loss = 0.0;
  std::size_t pairs = 0;
};

/// One shuffled pass of minibatch gradient descent over the records of the
/// requested preferences. Multitask trains one model over `symbols`;
/// per-preference expects exactly one symbol. Throws std::invalid_argument if
/// the dataset has no record for a requested symbol.
RewardTrainResult train_reward_model(std::span<const ComparisonRecord> records,
                                     RewardVariant variant,
                                     std::span<const std::string> symbols,
                                     const RewardTrainConfig& config,
                                     const EnvironmentConfig& env, std::uint64_t seed);

/// Fraction of oracle-decided pairs (judge ties skipped) the model orders
/// like the oracle.
double oracle_agreement(const RewardModel& model, std::span<const ComparisonRecord> records,
                        const PreferenceSpace& space, const EnvironmentConfig& env,
                        std::string_view symbol);

CheckpointFile to_checkpoint_file(const RewardModel& model);
RewardModel reward_model_from_checkpoint_file(const CheckpointFile& file,
                                              const std::string& origin);
void save_reward_model(const std::filesystem::path& path, const RewardModel& model);
RewardModel load_reward_model(const std::filesystem::path& path);

}  // namespace rlphf
