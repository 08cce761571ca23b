// SPDX-License-Identifier: Apache-2.0
#include "rlphf/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "rlphf/rng.hpp"

namespace rlphf {

std::vector<BattleCase> evaluation_cases(const EnvironmentConfig& env, std::uint64_t seed) {
  std::vector<BattleCase> cases;
  const auto prompts = heldout_prompts(env);
  for (int round = 0; round < env.eval_rounds; ++round) {
    for (const auto& p : prompts) {
      cases.push_back({p, derive_seed(seed, "eval-case", cases.size())});
    }
  }
  return cases;
}

std::vector<Criterion> preference_criteria(const PreferenceCombination& combo,
                                           const PreferenceSpace& space,
                                           const EnvironmentConfig& env) {
  std::vector<Criterion> out;
  for (const auto& sym : combo.chosen) {
    const PreferenceId pref = space.find(sym);
    out.push_back({sym, [pref, env](const Response& a, const Response& b, const Prompt& p) {
                     return oracle_judge(pref, a, b, p, env);
                   }});
  }
  return out;
}

Criterion helpfulness_criterion(const EnvironmentConfig& env) {
  return {"helpfulness", [env](const Response& a, const Response& b, const Prompt& p) {
            return helpfulness_judge(a, b, p, env);
          }};
}

std::pair<int, Verdict> aggregate_score(std::span<const Verdict> verdicts) {
  int score = 0;
  for (Verdict v : verdicts) score += value(v);
  const Verdict v = score > 0 ? Verdict::kWin : (score < 0 ? Verdict::kLose : Verdict::kTie);
  return {score, v};
}

void WinCounts::add(Verdict v) {
  switch (v) {
    case Verdict::kWin: ++wins; break;
    case Verdict::kLose: ++losses; break;
    case Verdict::kTie: ++ties; break;
  }
}

WinCounts& WinCounts::operator+=(const WinCounts& other) {
  wins += other.wins;
  losses += other.losses;
  ties += other.ties;
  return *this;
}

std::optional<double> WinCounts::win_rate() const {
  if (wins + losses == 0) return std::nullopt;
  return static_cast<double>(wins) / static_cast<double>(wins + losses);
}

WinRateReport win_rate(std::span<const BattleOutcome> outcomes) {
  WinRateReport r;
  for (const auto& o : outcomes) {
    r.total.add(o.verdict);
    r.per_combo[o.combo].add(o.verdict);
    for (std::size_t i = 0; i < o.verdicts.size() && i < o.criteria.size(); ++i) {
      r.per_criterion[o.criteria[i]].add(o.verdicts[i]);
    }
  }
  return r;
}

std::vector<BattleOutcome> judge_responses(std::span<const Response> a,
                                           std::span<const Response> b,
                                           std::span<const BattleCase> cases,
                                           const std::string& combo,
                                           std::span<const Criterion> criteria) {
  if (a.size() != cases.size() || b.size() != cases.size()) {
    throw std::invalid_argument("judge_responses: response and case counts differ");
  }
  std::vector<BattleOutcome> out;
  out.reserve(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    BattleOutcome o;
    o.prompt_id = cases[i].prompt.id;
    o.combo = combo;
    for (const auto& c : criteria) {
      o.criteria.push_back(c.name);
      o.verdicts.push_back(c.judge(a[i], b[i], cases[i].prompt));
    }
    std::tie(o.score, o.verdict) = aggregate_score(o.verdicts);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<Response> generate_responses(const Responder& responder,
                                         std::span<const BattleCase> cases, double temperature) {
  std::vector<Response> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(responder.respond(c.prompt, c.seed, temperature));
  return out;
}

std::vector<BattleOutcome> battle(const Responder& a, const Responder& b,
                                  const std::string& combo, std::span<const BattleCase> cases,
                                  std::span<const Criterion> criteria, double temperature) {
  const auto ra = generate_responses(a, cases, temperature);
  const auto rb = generate_responses(b, cases, temperature);
  return judge_responses(ra, rb, cases, combo, criteria);
}

WinCounts criteria_wise_win_rate(std::span<const BattleOutcome> outcomes,
                                 const PreferenceSpace& space, std::string_view symbol) {
  space.find(symbol);
  WinCounts c;
  for (const auto& o : outcomes) {
    const auto combo = space.combination_from_code(o.combo);
    if (std::find(combo.chosen.begin(), combo.chosen.end(), symbol) != combo.chosen.end()) {
      c.add(o.verdict);
    }
  }
  return c;
}

double mean_preference_score(std::span<const Response> responses,
                             std::span<const BattleCase> cases, const PreferenceSpace& space,
                             std::string_view symbol, const EnvironmentConfig& env) {
  if (responses.size() != cases.size() || responses.empty()) {
    throw std::invalid_argument("mean_preference_score: response and case counts differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    s += preference_score(space, symbol, compute_stats(responses[i], cases[i].prompt, env));
  }
  return s / static_cast<double>(responses.size());
}

ResponseTable generate_response_table(const ResponderTable& responders,
                                      std::span<const BattleCase> cases, double temperature) {
  ResponseTable table;
  for (const auto& [method, by_combo] : responders) {
    for (const auto& [code, responder] : by_combo) {
      table[method][code] = generate_responses(responder, cases, temperature);
    }
  }
  return table;
}

std::optional<double> MethodMatrix::row_average(std::size_t i) const {
  double s = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < methods.size(); ++j) {
    if (i == j) continue;
    if (const auto r = cells[i][j].win_rate()) {
      s += *r;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

const WinRateReport& MethodMatrix::at(MethodId a, MethodId b) const {
  const auto ia = std::find(methods.begin(), methods.end(), a);
  const auto ib = std::find(methods.begin(), methods.end(), b);
  if (ia == methods.end() || ib == methods.end()) {
    throw std::invalid_argument("method matrix has no cell for " + std::string(to_string(a)) +
                                " vs " + std::string(to_string(b)));
  }
  return cells[static_cast<std::size_t>(ia - methods.begin())]
              [static_cast<std::size_t>(ib - methods.begin())];
}

namespace {

const std::vector<Response>& lookup(const ResponseTable& table, MethodId m,
                                    const std::string& code) {
  const auto it = table.find(m);
  if (it == table.end()) {
    throw std::invalid_argument("no responses for method " + std::string(to_string(m)));
  }
  const auto jt = it->second.find(code);
  if (jt == it->second.end()) {
    throw std::invalid_argument("no responses for method " + std::string(to_string(m)) +
                                " on combination " + code);
  }
  return jt->second;
}

template <typename CriteriaFn>
MethodMatrix pairwise(const ResponseTable& responses, std::span<const MethodId> methods,
                      const PreferenceSpace& space, std::span<const BattleCase> cases,
                      CriteriaFn criteria_for) {
  MethodMatrix m;
  m.methods.assign(methods.begin(), methods.end());
  m.cells.assign(methods.size(), std::vector<WinRateReport>(methods.size()));
  const auto combos = enumerate_combinations(space);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < methods.size(); ++j) {
      if (i == j) continue;
      std::vector<BattleOutcome> all;
      for (const auto& combo : combos) {
        const auto criteria = criteria_for(combo);
        auto out = judge_responses(lookup(responses, methods[i], combo.code),
                                   lookup(responses, methods[j], combo.code), cases, combo.code,
                                   criteria);
        all.insert(all.end(), out.begin(), out.end());
      }
      m.cells[i][j] = win_rate(all);
    }
  }
  return m;
}

}  // namespace

MethodMatrix aggregated_matrix(const ResponseTable& responses, std::span<const MethodId> methods,
                               const PreferenceSpace& space, std::span<const BattleCase> cases,
                               const EnvironmentConfig& env) {
  return pairwise(responses, methods, space, cases, [&](const PreferenceCombination& combo) {
    return preference_criteria(combo, space, env);
  });
}

MethodMatrix helpfulness_tradeoff(const ResponseTable& responses,
                                  std::span<const MethodId> methods,
                                  const PreferenceSpace& space, std::span<const BattleCase> cases,
                                  const EnvironmentConfig& env) {
  const std::vector<Criterion> criteria = {helpfulness_criterion(env)};
  return pairwise(responses, methods, space, cases,
                  [&](const PreferenceCombination&) { return criteria; });
}

std::string format_rate(std::optional<double> rate) {
  if (!rate) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *rate);
  return buf;
}

std::string matrix_csv(const MethodMatrix& matrix) {
  std::ostringstream out;
  out << "method";
  for (MethodId m : matrix.methods) out << ',' << to_string(m);
  out << ",average\n";
  for (std::size_t i = 0; i < matrix.methods.size(); ++i) {
    out << to_string(matrix.methods[i]);
    for (std::size_t j = 0; j < matrix.methods.size(); ++j) {
      out << ',' << (i == j ? std::string("-") : format_rate(matrix.cells[i][j].win_rate()));
    }
    out << ',' << format_rate(matrix.row_average(i)) << '\n';
  }
  return out.str();
}

namespace {

void counts_row(std::ostringstream& out, const WinCounts& c) {
  out << c.wins << ',' << c.losses << ',' << c.ties << ',' << format_rate(c.win_rate()) << '\n';
}

}  // namespace

std::string detailed_csv(const MethodMatrix& matrix) {
  std::ostringstream out;
  out << "method_a,method_b,combo,wins,losses,ties,win_rate\n";
  for (std::size_t i = 0; i < matrix.methods.size(); ++i) {
    for (std::size_t j = 0; j < matrix.methods.size(); ++j) {
      if (i == j) continue;
      const auto& cell = matrix.cells[i][j];
      const auto prefix = std::string(to_string(matrix.methods[i])) + ',' +
                          std::string(to_string(matrix.methods[j])) + ',';
      for (const auto& [code, c] : cell.per_combo) {
        out << prefix << code << ',';
        counts_row(out, c);
      }
      out << prefix << "total,";
      counts_row(out, cell.total);
    }
  }
  return out.str();
}

std::string report_csv(const WinRateReport& report) {
  std::ostringstream out;
  out << "combo,wins,losses,ties,win_rate\n";
  for (const auto& [code, c] : report.per_combo) {
    out << code << ',';
    counts_row(out, c);
  }
  out << "total,";
  counts_row(out, report.total);
  return out.str();
}

nlohmann::json to_json(const WinCounts& c) {
  nlohmann::json j = {{"wins", c.wins}, {"losses", c.losses}, {"ties", c.ties}};
  const auto r = c.win_rate();
  j["win_rate"] = r ? nlohmann::json(*r) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const WinRateReport& report) {
  nlohmann::json j = {{"total", to_json(report.total)}};
  j["per_combo"] = nlohmann::json::object();
  for (const auto& [k, c] : report.per_combo) j["per_combo"][k] = to_json(c);
  j["per_criterion"] = nlohmann::json::object();
  for (const auto& [k, c] : report.per_criterion) j["per_criterion"][k] = to_json(c);
  return j;
}

nlohmann::json to_json(const MethodMatrix& matrix) {
  nlohmann::json j;
  j["methods"] = nlohmann::json::array();
  for (MethodId m : matrix.methods) j["methods"].push_back(to_string(m));
  j["cells"] = nlohmann::json::object();
  j["average"] = nlohmann::json::object();
  for (std::size_t i = 0; i < matrix.methods.size(); ++i) {
    const std::string a(to_string(matrix.methods[i]));
    for (std::size_t k = 0; k < matrix.methods.size(); ++k) {
      if (i == k) continue;
      j["cells"][a][std::string(to_string(matrix.methods[k]))] = to_json(matrix.cells[i][k].total);
    }
    const auto avg = matrix.row_average(i);
    j["average"][a] = avg ? nlohmann::json(*avg) : nlohmann::json(nullptr);
  }
  return j;
}

}  // namespace rlphf
