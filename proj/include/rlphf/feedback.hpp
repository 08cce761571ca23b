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
#include "rlphf/checkpoint.hpp"
#include "rlphf/env.hpp"
#include "rlphf/preference_space.hpp"

namespace rlphf {

inline constexpr int kFeedbackFormatVersion = 1;
/// Preference symbol used for general (helpfulness) comparisons.
inline constexpr std::string_view kGeneralSymbol = "GENERAL";

/// Positive > neutral > negative; the two positives are ordered by the judge.
enum class RelationKind {
  kPos1VsPos2,
  kPosVsNeutral,
  kPosVsNegative,
  kNeutralVsNegative,
  /// Two unconditioned samples ordered by the helpfulness judge.
  kGeneralPair,
};

std::string_view to_string(RelationKind kind);
RelationKind relation_kind_from_string(std::string_view name);

enum class Label { kA, kB };

struct ComparisonRecord {
  int draw = 0;
  int prompt_id = 0;
  std::string preference;
  RelationKind kind = RelationKind::kPos1VsPos2;
  Response a;
  Response b;
  Label label = Label::kA;
  /// Judge returned TIE and the label came from the tie-break stream.
  bool tie_broken = false;
  /// Which positive (1 or 2) was used in POS_VS_* records; 0 otherwise.
  int positive_slot = 0;

  const Response& winner() const { return label == Label::kA ? a : b; }
  const Response& loser() const { return label == Label::kA ? b : a; }

  nlohmann::json to_json() const;
  static ComparisonRecord from_json(const nlohmann::json& j);
  bool operator==(const ComparisonRecord&) const = default;
};

struct FeedbackDataset {
  std::vector<ComparisonRecord> records;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();

  /// Record count per preference symbol.
  std::map<std::string, std::size_t> coverage() const;
};

struct Candidates {
  Response positive_1;
  Response positive_2;
  Response neutral;
  Response negative;
  std::string negative_preference;
};

/// Positives use the preference's own mask bit, the neutral uses the zero
/// mask, the negative a uniformly chosen rival from the same dimension. Each
/// slot samples from its own sub-stream of `seed`.
/// Throws PreferenceError if the dimension has no rival preference.
Candidates generate_candidates(const PolicyCheckpoint& rollout, const Prompt& prompt,
                               const PreferenceSpace& space, std::string_view pref,
                               std::uint64_t seed, double temperature);

/// Orders two positives with the oracle judge; a TIE gets a label drawn from
/// `tie_seed`.
ComparisonRecord judge_positives(const PreferenceId& pref, const Response& pos1,
                                 const Response& pos2, const Prompt& prompt,
                                 const EnvironmentConfig& env, std::uint64_t tie_seed);

/// Four records per (prompt draw, preference). `symbols` restricts the
/// preferences covered; empty means the whole space.
FeedbackDataset build_dataset(const PolicyCheckpoint& rollout, std::span<const Prompt> prompts,
                              const PreferenceSpace& space, const EnvironmentConfig& env,
                              std::uint64_t seed, double temperature,
                              std::span<const std::string> symbols = {});

/// One helpfulness-judged pair of unconditioned samples per prompt draw.
FeedbackDataset build_general_dataset(const PolicyCheckpoint& rollout,
                                      std::span<const Prompt> prompts,
                                      const EnvironmentConfig& env, std::uint64_t seed,
                                      double temperature);

/// `count` training prompts drawn uniformly with replacement.
std::vector<Prompt> draw_prompts(const EnvironmentConfig& env, int count, std::uint64_t seed);

/// JSON-lines, one record per line, in dataset order.
std::string to_jsonl(const FeedbackDataset& dataset);
std::vector<ComparisonRecord> records_from_jsonl(const std::string& text,
                                                 const std::string& origin);

/// Writes `path` (records) and `path` + ".meta.json" (seed and metadata).
void save_dataset(const std::filesystem::path& path, const FeedbackDataset& dataset);
FeedbackDataset load_dataset(const std::filesystem::path& path);

}  // namespace rlphf
