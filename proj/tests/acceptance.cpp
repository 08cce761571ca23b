// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rlphf/merge.hpp"
#include "rlphf/orchestrate.hpp"
#include "rlphf/ppo.hpp"
#include "rlphf/reward_model.hpp"
#include "test_support.hpp"

using namespace rlphf;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << " " << name << ": " << detail
            << std::endl;
  if (!ok) ++failures;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
  return buf;
}

double rate_or_half(const WinRateReport& r) { return r.win_rate().value_or(0.5); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------

void protocol_arithmetic() {
  WinCounts c{134, 167, 99};
  const double r = *c.win_rate() * 100.0;
  bool ok = std::abs(r - 44.52) <= 0.01;

  int mismatches = 0;
  const Verdict all[] = {Verdict::kLose, Verdict::kTie, Verdict::kWin};
  for (Verdict a : all) {
    for (Verdict b : all) {
      for (Verdict d : all) {
        const std::vector<Verdict> v{a, b, d};
        int sum = 0;
        for (Verdict x : v) sum += x == Verdict::kWin ? 1 : x == Verdict::kLose ? -1 : 0;
        const Verdict want = sum > 0 ? Verdict::kWin : sum < 0 ? Verdict::kLose : Verdict::kTie;
        const auto [score, got] = aggregate_score(v);
        if (score != sum || got != want) ++mismatches;
      }
    }
  }
  ok = ok && mismatches == 0;
  char buf[128];
  std::snprintf(buf, sizeof buf, "134/167/99 -> %.4f%% (want 44.52 +- 0.01); truth table %d/27 match",
                r, 27 - mismatches);
  report(1, "protocol arithmetic", ok, buf);
}

// 2 -------------------------------------------------------------------------

struct GradStats {
  int checked = 0;
  int bad = 0;
  double worst = 0.0;

  void add(double analytic, double numeric) {
    if (std::abs(analytic) < 1e-8 && std::abs(numeric) < 1e-8) return;
    const double e = testing::relative_error(analytic, numeric);
    ++checked;
    worst = std::max(worst, e);
    if (e > 1e-4) ++bad;
  }
};

GradStats check_coordinates(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x, const std::vector<double>& grad,
                            Rng& rng) {
  GradStats s;
  for (int k = 0; k < 200 && s.checked < 10; ++k) {
    const std::size_t i = rng.below(x.size());
    s.add(grad[i], testing::central_difference(f, x, i, 1e-5));
  }
  return s;
}

void merge_stats(GradStats& into, const GradStats& s, int& short_instances) {
  into.checked += s.checked;
  into.bad += s.bad;
  into.worst = std::max(into.worst, s.worst);
  if (s.checked < 10) ++short_instances;
}

double toy_reward(const Prompt& p, std::span<const std::uint8_t> mask, const Response& r) {
  double v = 0.15 * static_cast<double>(r.tokens.size()) + (r.tokens[0] == 2 ? 1.0 : 0.0);
  if (!mask.empty() && mask[0]) v -= 0.3 * (r.tokens.size() > 3);
  return v + 0.1 * p.topic;
}

void gradient_correctness() {
  Rng rng(2024);
  const auto arch = testing::small_arch();
  GradStats logprob, bt, surrogate;
  int short_instances = 0;

  for (int inst = 0; inst < 5; ++inst) {
    const auto params = init_policy(arch, 100 + inst, 1.0);
    const auto mask = testing::random_mask(rng, arch.mask_length);
    const auto prompt = testing::small_prompt(static_cast<int>(rng.below(3)));
    const auto r = testing::random_tokens(rng, arch.vocab_size, arch.max_length);
    const auto lg = sequence_logprob_and_grad(arch, params, prompt, mask, r, 1.0);
    auto f = [&](const std::vector<double>& x) {
      return sequence_logprob(arch, ParameterVector{x, params.fingerprint}, prompt, mask, r, 1.0);
    };
    merge_stats(logprob, check_coordinates(f, params.values, lg.gradient.values, rng),
                short_instances);
  }

  for (int inst = 0; inst < 5; ++inst) {
    RewardModel m;
    m.architecture.preference_count = inst % 2 ? 6 : 0;
    m.architecture.hidden_width = 6;
    m.params.values.resize(m.architecture.parameter_count());
    for (auto& v : m.params.values) v = (rng.uniform() - 0.5) * 1.6;
    m.params.fingerprint = m.architecture.fingerprint();
    std::vector<RewardPair> pairs;
    for (int i = 0; i < 6; ++i) {
      RewardPair p{std::vector<double>(m.architecture.input_width()),
                   std::vector<double>(m.architecture.input_width())};
      for (auto& v : p.winner) v = rng.uniform();
      for (auto& v : p.loser) v = rng.uniform();
      pairs.push_back(std::move(p));
    }
    const auto lg = bt_loss_and_grad(m.architecture, m.params, pairs);
    auto f = [&](const std::vector<double>& x) {
      return bt_loss_and_grad(m.architecture, ParameterVector{x, m.params.fingerprint}, pairs).loss;
    };
    merge_stats(bt, check_coordinates(f, m.params.values, lg.gradient.values, rng), short_instances);
  }

  for (int inst = 0; inst < 5; ++inst) {
    const auto behavior = init_policy(arch, 200 + inst, 1.0);
    const auto ref = init_policy(arch, 300 + inst, 1.0);
    std::vector<Prompt> prompts;
    for (int i = 0; i < 24; ++i) prompts.push_back(testing::small_prompt(i % 3));
    const MaskFn masks = [](std::size_t i, Rng&) {
      return PreferenceMask{static_cast<std::uint8_t>(i % 2), 0, 1, 0};
    };
    PPOConfig config;
    RewardShaping shaping{EmaBaseline(0.9, 0.0), std::nullopt};
    const auto batch = collect_rollouts(arch, behavior, ref, toy_reward, prompts, masks, config,
                                        400 + inst, shaping);
    // evaluate away from the behavior policy so ratios differ from 1
    auto params = behavior;
    for (auto& v : params.values) v += (rng.uniform() - 0.5) * 0.1;
    const auto grad = surrogate_gradient(arch, params, batch, config.clip);
    auto f = [&](const std::vector<double>& x) {
      return surrogate_objective(arch, ParameterVector{x, params.fingerprint}, batch, config.clip);
    };
    merge_stats(surrogate, check_coordinates(f, params.values, grad.values, rng), short_instances);
  }

  const bool ok = logprob.bad + bt.bad + surrogate.bad == 0 && short_instances == 0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "max rel err logprob %.2e (%d coords), BT %.2e (%d), PPO %.2e (%d); bound 1e-4",
                logprob.worst, logprob.checked, bt.worst, bt.checked, surrogate.worst,
                surrogate.checked);
  report(2, "gradient correctness", ok, buf);
}

// 3 -------------------------------------------------------------------------

ParameterVector random_params(Rng& rng, std::size_t n) {
  ParameterVector p{std::vector<double>(n), 11};
  for (auto& v : p.values) v = (rng.uniform() - 0.5) * 6.0;
  return p;
}

std::vector<double> random_weights(Rng& rng, std::size_t k) {
  std::vector<double> w(k);
  double s = 0.0;
  for (auto& x : w) s += (x = rng.uniform() + 0.01);
  for (auto& x : w) x /= s;
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) t += w[i];
  w.back() = 1.0 - t;
  return w;
}

MergeSpec spec_of(const std::vector<ParameterVector>& xs, std::vector<double> w,
                  MergeMode mode = MergeMode::kFull, const ParameterVector* ref = nullptr) {
  MergeSpec s;
  for (const auto& x : xs) s.inputs.push_back(&x);
  s.weights = std::move(w);
  s.mode = mode;
  s.reference = ref;
  return s;
}

void merge_algebra() {
  Rng rng(77);
  int identity = 0, idempotent = 0, commutative = 0, convex = 0, delta = 0;
  const int trials = 50;
  double worst_delta = 0.0;
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = 64 + rng.below(200);
    const std::size_t k = 2 + rng.below(5);
    std::vector<ParameterVector> xs;
    for (std::size_t i = 0; i < k; ++i) xs.push_back(random_params(rng, n));
    const auto w = random_weights(rng, k);
    const auto m = merge(spec_of(xs, w));

    const std::vector<ParameterVector> one{xs[0]};
    identity += merge(spec_of(one, {1.0})) == xs[0];

    const auto q = xs[0].quantized();
    const std::vector<ParameterVector> same(k, q);
    idempotent += uniform_soup(same) == q;

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<ParameterVector> ys;
    std::vector<double> v;
    for (auto i : perm) {
      ys.push_back(xs[i]);
      v.push_back(w[i]);
    }
    commutative += merge(spec_of(ys, v)) == m && uniform_soup(ys) == uniform_soup(xs);

    bool inside = true;
    for (std::size_t j = 0; j < n; ++j) {
      double lo = xs[0].values[j], hi = lo;
      for (const auto& x : xs) {
        lo = std::min(lo, x.values[j]);
        hi = std::max(hi, x.values[j]);
      }
      inside = inside && m.values[j] >= lo - 1e-12 && m.values[j] <= hi + 1e-12;
    }
    convex += inside;

    const auto ref = random_params(rng, n);
    const auto d = merge(spec_of(xs, w, MergeMode::kDelta, &ref));
    double err = 0.0;
    for (std::size_t j = 0; j < n; ++j) err = std::max(err, std::abs(d.values[j] - m.values[j]));
    worst_delta = std::max(worst_delta, err);
    delta += err <= 1e-9;
  }
  const bool ok = identity == trials && idempotent == trials && commutative == trials &&
                  convex == trials && delta == trials;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d trials: identity %d, idempotence %d, commutativity %d, convex hull %d, "
                "FULL==DELTA %d (max diff %.1e)",
                trials, identity, idempotent, commutative, convex, delta, worst_delta);
  report(3, "merge algebra", ok, buf);
}

// 4-6 -----------------------------------------------------------------------

struct SeedResult {
  std::map<std::string, double> expert_vs_base;
  /// combo -> chosen symbol -> mean score shift of the soup vs the base
  std::map<std::string, std::map<std::string, double>> soup_shift;
  std::map<std::string, double> soup_vs_vb;
  std::map<std::pair<MethodId, MethodId>, double> aggregated;
  std::map<std::pair<MethodId, MethodId>, double> helpfulness;
};

SeedResult run_main_seed(const RunConfig& cfg, std::uint64_t seed) {
  SeedResult out;
  const auto art = train_main(cfg, seed);
  const auto& space = cfg.space;
  const double temp = cfg.eval.temperature;
  const auto cases = evaluation_cases(cfg.env, derive_seed(seed, "eval"));
  const auto base = std::make_shared<const PolicyCheckpoint>(art.base);

  for (const auto& [sym, e] : art.experts) {
    const auto mask = single_preference_mask(sym, space);
    const Responder expert{MethodId::kPSoups, std::make_shared<const PolicyCheckpoint>(e), mask};
    const Responder plain{MethodId::kPP, base, mask};
    const auto pref = space.find(sym);
    const std::vector<Criterion> criteria{
        {sym, [pref, &cfg](const Response& a, const Response& b, const Prompt& p) {
           return oracle_judge(pref, a, b, p, cfg.env);
         }}};
    out.expert_vs_base[sym] = rate_or_half(win_rate(battle(expert, plain, sym, cases, criteria, temp)));
  }

  const auto soups = psoups_responders(art.experts, space);
  const auto vb = generate_responses(run_vb(base), cases, temp);
  for (const auto& combo : enumerate_combinations(space)) {
    const auto rs = generate_responses(soups.at(combo.code), cases, temp);
    const auto rp = generate_responses(run_pp(base, combo, space), cases, temp);
    for (const auto& sym : combo.chosen) {
      out.soup_shift[combo.code][sym] = mean_preference_score(rs, cases, space, sym, cfg.env) -
                                        mean_preference_score(rp, cases, space, sym, cfg.env);
    }
    const auto outcomes =
        judge_responses(rs, vb, cases, combo.code, preference_criteria(combo, space, cfg.env));
    out.soup_vs_vb[combo.code] = rate_or_half(win_rate(outcomes));
  }

  const auto rep = evaluate_main(art, cfg, seed);
  for (MethodId a : kAllMethods) {
    for (MethodId b : kAllMethods) {
      if (a == b) continue;
      out.aggregated[{a, b}] = rate_or_half(rep.aggregated.at(a, b));
      out.helpfulness[{a, b}] = rate_or_half(rep.helpfulness.at(a, b));
    }
  }
  return out;
}

void main_criteria(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedResult> seeds;
  for (int s = 1; s <= kSeeds; ++s) {
    seeds.push_back(run_main_seed(cfg, static_cast<std::uint64_t>(s)));
    std::cout << "  main pipeline seed " << s << " done (" << static_cast<int>(seconds_since(t0))
              << " s)" << std::endl;
  }
  const double elapsed = seconds_since(t0);

  {
    bool ok = true;
    std::ostringstream d;
    for (const auto& [sym, _] : seeds[0].expert_vs_base) {
      std::vector<double> xs;
      for (const auto& s : seeds) xs.push_back(s.expert_vs_base.at(sym));
      const double m = median(xs);
      ok = ok && m >= 0.70;
      d << sym << " " << pct(m) << " ";
    }
    d << "(median of " << kSeeds << " seeds, bound 70%; pipeline " << static_cast<int>(elapsed)
      << " s for " << kSeeds << " seeds)";
    report(4, "single-objective efficacy", ok, d.str());
  }

  {
    bool ok = true;
    double worst_shift = 1e9, worst_vb = 1e9;
    std::string worst_shift_at, worst_vb_at;
    int negative_runs = 0;
    for (const auto& [code, shifts] : seeds[0].soup_shift) {
      for (const auto& [sym, _] : shifts) {
        std::vector<double> xs;
        for (const auto& s : seeds) {
          xs.push_back(s.soup_shift.at(code).at(sym));
          negative_runs += xs.back() <= 0.0;
        }
        const double m = median(xs);
        if (m < worst_shift) {
          worst_shift = m;
          worst_shift_at = code + "/" + sym;
        }
        ok = ok && m > 0.0;
      }
      std::vector<double> xs;
      for (const auto& s : seeds) xs.push_back(s.soup_vs_vb.at(code));
      const double m = median(xs);
      if (m < worst_vb) {
        worst_vb = m;
        worst_vb_at = code;
      }
      ok = ok && m >= 0.60;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "smallest median shift %+.4f (%s), lowest median win rate vs VB %s (%s), "
                  "bound 60%%; %d of %d per-seed shifts not positive",
                  worst_shift, worst_shift_at.c_str(), pct(worst_vb).c_str(), worst_vb_at.c_str(),
                  negative_runs, 24 * kSeeds);
    report(5, "soup compositionality", ok, buf);
  }

  {
    auto med = [&](auto member, MethodId a, MethodId b) {
      std::vector<double> xs;
      for (const auto& s : seeds) xs.push_back((s.*member).at({a, b}));
      return median(xs);
    };
    const double ps = med(&SeedResult::aggregated, MethodId::kPSoups, MethodId::kPP);
    const double pm = med(&SeedResult::aggregated, MethodId::kPMORL, MethodId::kPP);
    const double mt = med(&SeedResult::aggregated, MethodId::kMT, MethodId::kPP);
    std::map<MethodId, double> help_avg;
    for (MethodId a : kAllMethods) {
      double sum = 0.0;
      for (MethodId b : kAllMethods) {
        if (a != b) sum += med(&SeedResult::helpfulness, a, b);
      }
      help_avg[a] = sum / (kAllMethods.size() - 1);
    }
    bool rlhf_best = true;
    for (const auto& [m, v] : help_avg) {
      if (m != MethodId::kRlhfGeneral && v >= help_avg.at(MethodId::kRlhfGeneral)) rlhf_best = false;
    }
    const bool ok = ps > 0.5 && pm > 0.5 && mt > 0.5 && rlhf_best;
    std::ostringstream d;
    d << "vs PP: PSOUPS " << pct(ps) << ", PMORL " << pct(pm) << ", MT " << pct(mt)
      << "; helpfulness averages";
    for (const auto& [m, v] : help_avg) d << " " << to_string(m) << " " << pct(v);
    report(6, "ordering reproduction", ok, d.str());
  }
}

// 7 -------------------------------------------------------------------------

PreferenceSpace shaped(const std::vector<int>& sizes) {
  std::vector<DimensionSpec> dims;
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    DimensionSpec spec{"D" + std::to_string(d + 1), {}};
    for (int m = 0; m < sizes[d]; ++m) {
      spec.preferences.push_back(
          {"P" + std::to_string(d + 1) + static_cast<char>('A' + m), Objective::kSimple, ""});
    }
    dims.push_back(spec);
  }
  return PreferenceSpace(dims);
}

bool closed_form_costs() {
  Rng rng(91);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> sizes(1 + rng.below(4));
    for (auto& s : sizes) s = 1 + static_cast<int>(rng.below(4));
    auto grown = sizes;
    std::size_t added = 0;
    for (auto& s : grown) {
      const int extra = static_cast<int>(rng.below(3));
      s += extra;
      added += static_cast<std::size_t>(extra);
    }
    std::size_t members = 0, combos = 1, grown_combos = 1;
    for (int s : sizes) {
      members += static_cast<std::size_t>(s);
      combos *= static_cast<std::size_t>(s);
    }
    for (int s : grown) grown_combos *= static_cast<std::size_t>(s);
    const auto a = shaped(sizes);
    const auto b = shaped(grown);
    if (training_cost(a, CompositionMethod::kPersonalizedSoups) != members) return false;
    if (training_cost(a, CompositionMethod::kPromptedMorl) != combos) return false;
    if (incremental_cost(a, b, CompositionMethod::kPersonalizedSoups) != added) return false;
    const std::size_t morl = added == 0 ? 0 : grown_combos;
    if (incremental_cost(a, b, CompositionMethod::kPromptedMorl) != morl) return false;
  }
  return true;
}

void scalability(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> rates;
  bool ledgers_ok = true;
  for (int s = 1; s <= kSeeds; ++s) {
    const auto r = scaling_experiment(cfg, static_cast<std::uint64_t>(s));
    std::size_t jobs = 0, coverage = 0;
    std::set<std::string> codes;
    for (const auto& job : r.ledger.jobs) {
      if (job.kind != "ppo" || job.stage != "extension") continue;
      if (job.method == "PSOUPS") ++jobs;
      if (job.method == "PMORL") codes.insert(job.combinations.begin(), job.combinations.end());
    }
    coverage = codes.size();
    ledgers_ok = ledgers_ok && jobs == 2 && coverage == 16;
    rates.push_back(rate_or_half(r.psoups_vs_pmorl));
    std::cout << "  scaling seed " << s << ": " << jobs << " new P-Soups jobs, " << coverage
              << " P-MORL combinations, PSOUPS vs PMORL " << pct(rates.back()) << " ("
              << static_cast<int>(seconds_since(t0)) << " s)" << std::endl;
  }
  const bool costs = closed_form_costs();
  const double m = median(rates);
  const bool ok = ledgers_ok && costs && m >= 0.40;
  std::ostringstream d;
  d << "ledgers " << (ledgers_ok ? "2 new jobs / 16 combos on every seed" : "MISMATCH")
    << "; closed-form costs " << (costs ? "match" : "MISMATCH") << "; median PSOUPS vs PMORL "
    << pct(m) << " (bound 40%)";
  report(7, "scalability accounting", ok, d.str());
}

// 8 -------------------------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

void determinism(const std::string& cli, const fs::path& workdir) {
  const fs::path a = workdir / "main_a", b = workdir / "main_b";
  fs::remove_all(a);
  fs::remove_all(b);
  int status = 0;
  for (const auto& dir : {a, b}) {
    const std::string cmd = "\"" + cli + "\" experiment main --seed 7 --out \"" + dir.string() +
                            "\" > \"" + dir.string() + ".log\" 2>&1";
    status |= std::system(cmd.c_str());
  }
  if (status != 0) {
    report(8, "determinism", false, "CLI run failed; see logs under " + workdir.string());
    return;
  }
  const auto ta = read_tree(a), tb = read_tree(b);
  std::size_t csv = 0, ckpt = 0, differing = 0;
  std::string first_diff;
  for (const auto& [name, bytes] : ta) {
    csv += name.ends_with(".csv");
    ckpt += name.ends_with(".ckpt");
    const auto it = tb.find(name);
    if (it == tb.end() || it->second != bytes) {
      if (differing++ == 0) first_diff = name;
    }
  }
  const bool ok = ta.size() == tb.size() && differing == 0 && csv > 0 && ckpt > 0;
  std::ostringstream d;
  d << ta.size() << " files (" << csv << " CSV, " << ckpt << " checkpoints) compared, "
    << differing << " differ";
  if (!first_diff.empty()) d << " (first: " << first_diff << ")";
  report(8, "determinism", ok, d.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string cli;
  std::string workdir = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--cli", cli, "path to the rlphf command line tool")->required();
  app.add_option("--workdir", workdir, "scratch directory for CLI runs");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  auto want = [&only](int id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };
  const RunConfig cfg;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (want(1)) protocol_arithmetic();
    if (want(2)) gradient_correctness();
    if (want(3)) merge_algebra();
    if (want(4) || want(5) || want(6)) main_criteria(cfg);
    if (want(7)) scalability(cfg);
    if (want(8)) determinism(cli, workdir);
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << " in " << static_cast<int>(seconds_since(t0)) << " s" << std::endl;
  return failures == 0 ? 0 : 1;
}
