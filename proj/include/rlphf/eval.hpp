// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rlphf/env.hpp"
#include "rlphf/preference_space.hpp"
#include "rlphf/responder.hpp"

namespace rlphf {

/// One evaluation query: both sides decode `prompt` with the same seed.
struct BattleCase {
  Prompt prompt;
  std::uint64_t seed = 0;
};

/// Held-out prompts repeated env.eval_rounds times, round-major.
std::vector<BattleCase> evaluation_cases(const EnvironmentConfig& env, std::uint64_t seed);

struct Criterion {
  std::string name;
  std::function<Verdict(const Response& a, const Response& b, const Prompt& prompt)> judge;
};

/// One oracle criterion per chosen preference, in dimension order.
std::vector<Criterion> preference_criteria(const PreferenceCombination& combo,
                                           const PreferenceSpace& space,
                                           const EnvironmentConfig& env);
Criterion helpfulness_criterion(const EnvironmentConfig& env);

struct BattleOutcome {
  int prompt_id = 0;
  std::string combo;
  std::vector<std::string> criteria;
  std::vector<Verdict> verdicts;
  int score = 0;
  Verdict verdict = Verdict::kTie;
};

/// Sum of verdict values and its sign as a verdict.
std::pair<int, Verdict> aggregate_score(std::span<const Verdict> verdicts);

struct WinCounts {
  long wins = 0;
  long losses = 0;
  long ties = 0;

  void add(Verdict v);
  WinCounts& operator+=(const WinCounts& other);
  long total() const { return wins + losses + ties; }
  /// wins / (wins + losses); nullopt when there are only ties.
  std::optional<double> win_rate() const;

  bool operator==(const WinCounts&) const = default;
};

struct WinRateReport {
  WinCounts total;
  std::map<std::string, WinCounts> per_combo;
  /// Per-criterion verdict counts (one entry per judged dimension).
  std::map<std::string, WinCounts> per_criterion;

  std::optional<double> win_rate() const { return total.win_rate(); }
};

WinRateReport win_rate(std::span<const BattleOutcome> outcomes);

/// Judges precomputed responses pairwise; a[i] and b[i] answer cases[i].
std::vector<BattleOutcome> judge_responses(std::span<const Response> a,
                                           std::span<const Response> b,
                                           std::span<const BattleCase> cases,
                                           const std::string& combo,
                                           std::span<const Criterion> criteria);

std::vector<Response> generate_responses(const Responder& responder,
                                         std::span<const BattleCase> cases, double temperature);

/// Both responders answer every case, then each criterion judges the pair.
std::vector<BattleOutcome> battle(const Responder& a, const Responder& b,
                                  const std::string& combo, std::span<const BattleCase> cases,
                                  std::span<const Criterion> criteria, double temperature);

/// Counts pooled over outcomes whose combination contains `symbol`.
WinCounts criteria_wise_win_rate(std::span<const BattleOutcome> outcomes,
                                 const PreferenceSpace& space, std::string_view symbol);

/// Mean oracle score of `symbol` over responses to `cases`.
double mean_preference_score(std::span<const Response> responses,
                             std::span<const BattleCase> cases, const PreferenceSpace& space,
                             std::string_view symbol, const EnvironmentConfig& env);

/// methods x combos -> responder. Zero-mask methods may repeat one responder.
using ResponderTable = std::map<MethodId, std::map<std::string, Responder>>;
/// methods x combos -> responses, aligned with the evaluation cases.
using ResponseTable = std::map<MethodId, std::map<std::string, std::vector<Response>>>;

ResponseTable generate_response_table(const ResponderTable& responders,
                                      std::span<const BattleCase> cases, double temperature);

/// Pairwise reports; cell (i, j) is methods[i] against methods[j]. Diagonal
/// cells stay empty.
struct MethodMatrix {
  std::vector<MethodId> methods;
  std::vector<std::vector<WinRateReport>> cells;

  /// Mean of the defined off-diagonal win rates of row i.
  std::optional<double> row_average(std::size_t i) const;
  const WinRateReport& at(MethodId a, MethodId b) const;
};

/// Aggregated-score battles over every combination.
MethodMatrix aggregated_matrix(const ResponseTable& responses, std::span<const MethodId> methods,
                               const PreferenceSpace& space, std::span<const BattleCase> cases,
                               const EnvironmentConfig& env);

/// Helpfulness-only battles pooled over every combination.
MethodMatrix helpfulness_tradeoff(const ResponseTable& responses,
                                  std::span<const MethodId> methods,
                                  const PreferenceSpace& space, std::span<const BattleCase> cases,
                                  const EnvironmentConfig& env);

/// "method,<methods...>,average" with win rates in percent (two decimals);
/// "-" on the diagonal, "NA" where undefined.
std::string matrix_csv(const MethodMatrix& matrix);
/// "method_a,method_b,combo,wins,losses,ties,win_rate" with one row per
/// ordered pair and combination plus a "total" row per pair.
std::string detailed_csv(const MethodMatrix& matrix);
/// "combo,wins,losses,ties,win_rate" rows plus a "total" row.
std::string report_csv(const WinRateReport& report);

nlohmann::json to_json(const WinCounts& counts);
nlohmann::json to_json(const WinRateReport& report);
nlohmann::json to_json(const MethodMatrix& matrix);

/// Percent with two decimals, or "NA".
std::string format_rate(std::optional<double> rate);

}  // namespace rlphf
