// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rlphf/preference_space.hpp"

namespace rlphf {

class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = std::int32_t;

enum class TokenClass : std::uint8_t {
  kSimple,
  kTechnical,
  kFriendly,
  kUnfriendly,
  kSassy,
  kSarcastic,
  kContent,
  kEos,
};
inline constexpr std::size_t kTokenClassCount = 8;
/// Every class except EOS.
inline constexpr std::size_t kTextClassCount = 7;
inline constexpr std::array<TokenClass, 4> kStyleClasses{
    TokenClass::kFriendly, TokenClass::kUnfriendly, TokenClass::kSassy, TokenClass::kSarcastic};

std::string_view to_string(TokenClass c);

struct TokenRange {
  TokenId first = 0;
  int count = 0;
  bool contains(TokenId t) const { return t >= first && t < first + count; }
};

/// Token ids partitioned into contiguous class ranges, in TokenClass order.
class Vocabulary {
 public:
  /// Sizes indexed by TokenClass. EOS must have size 1; CONTENT at least 1.
  explicit Vocabulary(std::array<int, kTokenClassCount> class_sizes);

  static Vocabulary default_vocabulary();  // 4,4,3,3,3,3,11,1 -> 32 tokens

  int size() const { return size_; }
  TokenId eos() const { return ranges_[static_cast<std::size_t>(TokenClass::kEos)].first; }
  TokenRange range(TokenClass c) const { return ranges_[static_cast<std::size_t>(c)]; }
  /// Throws EnvironmentError for ids outside [0, size).
  TokenClass class_of(TokenId token) const;
  std::array<int, kTokenClassCount> class_sizes() const;

 private:
  std::array<TokenRange, kTokenClassCount> ranges_{};
  int size_ = 0;
};

struct EnvironmentConfig {
  Vocabulary vocab = Vocabulary::default_vocabulary();
  int max_length = 24;
  int train_prompts = 16;
  int eval_prompts = 8;
  /// Decoding rounds per held-out prompt in evaluation battles.
  int eval_rounds = 8;
  double judge_epsilon = 0.02;
  int helpfulness_cap = 4;

  /// Number of distinct prompt encodings (one per CONTENT token).
  int topic_count() const { return vocab.range(TokenClass::kContent).count; }

  nlohmann::json to_json() const;
  static EnvironmentConfig from_json(const nlohmann::json& j);
};

struct Prompt {
  int id = 0;
  /// Index of the prompt's target token within the CONTENT range; the policy
  /// and reward model see prompts through this encoding.
  int topic = 0;
  TokenId target_content_token = 0;
};

Prompt make_prompt(int id, const EnvironmentConfig& env);
/// Ids [0, train_prompts).
std::vector<Prompt> training_prompts(const EnvironmentConfig& env);
/// Held-out ids [train_prompts, train_prompts + eval_prompts).
std::vector<Prompt> heldout_prompts(const EnvironmentConfig& env);

/// Generated token sequence. Tokens after the first EOS carry no meaning.
struct Response {
  std::vector<TokenId> tokens;

  /// Tokens before the first EOS.
  std::size_t effective_length(TokenId eos) const;
  /// Tokens up to and including the first EOS (the scored prefix).
  std::span<const TokenId> scored_prefix(TokenId eos) const;

  bool operator==(const Response&) const = default;
};

struct ResponseStats {
  std::size_t effective_length = 0;
  double length_fraction = 0.0;
  /// count / max(1, effective_length), indexed by TokenClass; EOS entry is 0.
  std::array<double, kTokenClassCount> class_fraction{};
  std::array<int, kTokenClassCount> class_count{};
  int target_count = 0;
  double helpfulness = 0.0;

  double fraction(TokenClass c) const { return class_fraction[static_cast<std::size_t>(c)]; }
};

/// Throws EnvironmentError on token ids outside the vocabulary or responses
/// longer than max_length.
ResponseStats compute_stats(const Response& response, const Prompt& prompt,
                            const EnvironmentConfig& env);

/// Oracle score in [-1, 1] of `stats` under the preference's objective.
double preference_score(const PreferenceId& pref, const ResponseStats& stats);
/// Same, looking the preference up by symbol; throws PreferenceError if unknown.
double preference_score(const PreferenceSpace& space, std::string_view symbol,
                        const ResponseStats& stats);

/// Token class a style or expertise objective favors; kEos for the length
/// objectives, which have no favored class.
TokenClass favored_class(Objective objective);
bool is_length_objective(Objective objective);

/// Score contribution of one pairwise judgement: WIN = +1, TIE = 0, LOSE = -1.
enum class Verdict : int { kLose = -1, kTie = 0, kWin = 1 };

constexpr int value(Verdict v) { return static_cast<int>(v); }
constexpr Verdict negate(Verdict v) { return static_cast<Verdict>(-static_cast<int>(v)); }
std::string_view to_string(Verdict v);

/// WIN when score(a) - score(b) > epsilon, LOSE when < -epsilon, else TIE.
Verdict compare_scores(double score_a, double score_b, double epsilon);

Verdict oracle_judge(const PreferenceId& pref, const Response& a, const Response& b,
                     const Prompt& prompt, const EnvironmentConfig& env);
Verdict helpfulness_judge(const Response& a, const Response& b, const Prompt& prompt,
                          const EnvironmentConfig& env);

}  // namespace rlphf
