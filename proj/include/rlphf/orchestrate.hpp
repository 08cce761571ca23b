// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlphf/checkpoint.hpp"
#include "rlphf/config.hpp"
#include "rlphf/eval.hpp"
#include "rlphf/feedback.hpp"
#include "rlphf/ppo.hpp"
#include "rlphf/responder.hpp"
#include "rlphf/reward_model.hpp"
#include "rlphf/rng.hpp"

namespace rlphf {

/// One training job as recorded in a run ledger.
struct LedgerJob {
  std::string kind;    // pretrain, feedback, reward_model, ppo, behavior_cloning
  std::string method;  // MethodId name, or BASE / RM / DATA for shared stages
  std::string stage = "initial";
  std::vector<std::string> preferences;
  /// Combination codes the job trained on (P-MORL coverage).
  std::vector<std::string> combinations;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;

  nlohmann::json to_json() const;
};

struct RunLedger {
  std::vector<LedgerJob> jobs;

  /// Jobs matching kind and method, optionally restricted to one stage.
  std::size_t count(std::string_view kind, std::string_view method,
                    std::string_view stage = {}) const;
  nlohmann::json to_json() const;
};

/// One scripted demonstration for `mask` (see DemonstratorConfig).
Response demonstrate(const Prompt& prompt, std::span<const std::uint8_t> mask,
                     const PreferenceSpace& space, const EnvironmentConfig& env,
                     const DemonstratorConfig& demo, Rng& rng);

/// Mask with, per dimension, no bit set with probability
/// 1 - mask_dimension_probability and otherwise one uniformly chosen member.
PreferenceMask random_partial_mask(const PreferenceSpace& space, double dimension_probability,
                                   Rng& rng);

struct Demonstration {
  Prompt prompt;
  PreferenceMask mask;
  Response response;
};

/// One Adam ascent step on the mean log-likelihood of `batch`.
ParameterVector behavior_clone_step(const PolicyArchitecture& arch, const ParameterVector& params,
                                    std::span<const Demonstration> batch, double learning_rate,
                                    AdamState& adam);

/// Behavior-clones a fresh policy on the demonstrator over `space`.
PolicyCheckpoint pretrain_base(const RunConfig& config, const PreferenceSpace& space,
                               std::uint64_t seed, RunLedger* ledger = nullptr);

/// Per-preference feedback from `base` over `symbols` (all of `space` when
/// empty), with prompts and streams derived from `seed`.
FeedbackDataset generate_feedback(const RunConfig& config, const PolicyCheckpoint& base,
                                  const PreferenceSpace& space, std::uint64_t seed,
                                  std::span<const std::string> symbols = {},
                                  RunLedger* ledger = nullptr,
                                  std::string_view stage = "initial");
FeedbackDataset generate_general_feedback(const RunConfig& config, const PolicyCheckpoint& base,
                                          std::uint64_t seed, RunLedger* ledger = nullptr);

RewardModel train_multitask_rm(const RunConfig& config, std::span<const ComparisonRecord> records,
                               std::span<const std::string> symbols, std::uint64_t seed,
                               RunLedger* ledger = nullptr, std::string_view stage = "initial");
/// `symbol` may be kGeneralSymbol.
RewardModel train_preference_rm(const RunConfig& config,
                                std::span<const ComparisonRecord> records,
                                const std::string& symbol, std::uint64_t seed,
                                RunLedger* ledger = nullptr, std::string_view stage = "initial");

Responder run_vb(std::shared_ptr<const PolicyCheckpoint> base);
Responder run_pp(std::shared_ptr<const PolicyCheckpoint> base, const PreferenceCombination& combo,
                 const PreferenceSpace& space);

/// Single-preference PPO against a per-preference reward model.
PolicyCheckpoint train_expert(const RunConfig& config, const PolicyCheckpoint& base,
                              const RewardModel& rm, const std::string& symbol,
                              const PreferenceSpace& space, std::uint64_t seed,
                              RunLedger* ledger = nullptr, std::string_view stage = "initial",
                              std::vector<CurveRow>* curve = nullptr);

/// Zero-mask PPO against the general (helpfulness) reward model.
PolicyCheckpoint run_rlhf_general(const RunConfig& config, const PolicyCheckpoint& base,
                                  const RewardModel& general_rm, std::uint64_t seed,
                                  RunLedger* ledger = nullptr,
                                  std::vector<CurveRow>* curve = nullptr);

/// Behavior cloning on the oracle-selected winners of the POS1_VS_POS2
/// records, each conditioned on its preference's single-bit mask.
PolicyCheckpoint run_mt(const RunConfig& config, const PolicyCheckpoint& base,
                        const FeedbackDataset& dataset, const PreferenceSpace& space,
                        std::uint64_t seed, RunLedger* ledger = nullptr);

/// Reward of a P-MORL rollout: the mean of the multitask model's scores for
/// the preferences in `combo`.
double pmorl_reward(const RewardModel& rm, const PreferenceCombination& combo,
                    const Prompt& prompt, const Response& response, const EnvironmentConfig& env);

/// One policy trained over every combination, a uniformly drawn one per
/// rollout. Throws if the reward model lacks a preference of `space`.
PolicyCheckpoint run_pmorl(const RunConfig& config, const PolicyCheckpoint& base,
                           const RewardModel& multitask_rm, const PreferenceSpace& space,
                           std::uint64_t seed, RunLedger* ledger = nullptr,
                           std::string_view stage = "initial",
                           std::vector<CurveRow>* curve = nullptr);

/// One expert per listed preference (all of `space` when `symbols` is
/// empty). Throws naming the symbol when its reward model is missing.
std::map<std::string, PolicyCheckpoint> run_psoups(
    const RunConfig& config, const PolicyCheckpoint& base,
    const std::map<std::string, RewardModel>& rms, const PreferenceSpace& space,
    std::uint64_t seed, RunLedger* ledger = nullptr, std::string_view stage = "initial",
    std::span<const std::string> symbols = {});

/// Soup responders for every combination of `space`.
std::map<std::string, Responder> psoups_responders(
    const std::map<std::string, PolicyCheckpoint>& experts, const PreferenceSpace& space);

/// Everything the main comparison trains.
struct MainArtifacts {
  PolicyCheckpoint base;
  FeedbackDataset feedback;
  FeedbackDataset general_feedback;
  RewardModel multitask_rm;
  RewardModel general_rm;
  std::map<std::string, RewardModel> preference_rms;
  std::map<std::string, PolicyCheckpoint> experts;
  PolicyCheckpoint rlhf;
  PolicyCheckpoint mt;
  PolicyCheckpoint pmorl;
  RunLedger ledger;
  std::map<std::string, std::vector<CurveRow>> curves;
};

MainArtifacts train_main(const RunConfig& config, std::uint64_t seed);

/// Responders of all six methods for every combination.
ResponderTable main_responders(const MainArtifacts& artifacts, const PreferenceSpace& space);

struct MainReport {
  MethodMatrix aggregated;
  MethodMatrix helpfulness;
};

MainReport evaluate_main(const MainArtifacts& artifacts, const RunConfig& config,
                         std::uint64_t seed);

/// Writes checkpoints, datasets, curves, the ledger and the reports under
/// `dir`. Every file is written atomically.
void write_main_outputs(const std::filesystem::path& dir, const MainArtifacts& artifacts,
                        const MainReport& report, const RunConfig& config, std::uint64_t seed);

struct ScalingReport {
  /// PSOUPS against P-MORL retrained on the extended space.
  WinRateReport psoups_vs_pmorl;
  std::size_t psoups_new_jobs = 0;
  std::size_t pmorl_new_coverage = 0;
  std::size_t expected_psoups_new_jobs = 0;
  std::size_t expected_pmorl_new_coverage = 0;
  RunLedger ledger;

  nlohmann::json to_json() const;
};

/// Trains experts and P-MORL on config.space, extends to
/// config.extended_space (new experts only; P-MORL retrained over every
/// extended combination) and battles PSOUPS against the new P-MORL.
ScalingReport scaling_experiment(const RunConfig& config, std::uint64_t seed);

}  // namespace rlphf
