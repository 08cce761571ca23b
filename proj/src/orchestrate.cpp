// SPDX-License-Identifier: Apache-2.0
#include "rlphf/orchestrate.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "rlphf/merge.hpp"

namespace rlphf {

nlohmann::json LedgerJob::to_json() const {
  return {{"kind", kind},         {"method", method},
          {"stage", stage},       {"preferences", preferences},
          {"combinations", combinations}, {"seed", seed},
          {"episodes", episodes}};
}

std::size_t RunLedger::count(std::string_view kind, std::string_view method,
                             std::string_view stage) const {
  return static_cast<std::size_t>(std::count_if(jobs.begin(), jobs.end(), [&](const LedgerJob& j) {
    return j.kind == kind && j.method == method && (stage.empty() || j.stage == stage);
  }));
}

nlohmann::json RunLedger::to_json() const {
  nlohmann::json j = {{"format_version", 1}, {"jobs", nlohmann::json::array()}};
  for (const auto& job : jobs) j["jobs"].push_back(job.to_json());
  return j;
}

namespace {

void record(RunLedger* ledger, LedgerJob job) {
  if (ledger != nullptr) ledger->jobs.push_back(std::move(job));
}

TokenId draw_from(const Vocabulary& vocab, TokenClass c, Rng& rng) {
  const auto r = vocab.range(c);
  return r.first + static_cast<TokenId>(rng.below(static_cast<std::size_t>(r.count)));
}

PolicyCheckpoint make_checkpoint(const PolicyArchitecture& arch, const ParameterVector& params,
                                 std::vector<std::string> mask_symbols,
                                 PreferenceMask inference_mask,
                                 const RunConfig& config, std::uint64_t seed,
                                 nlohmann::json provenance) {
  PolicyCheckpoint c;
  c.architecture = arch;
  c.params = params.quantized();
  c.mask_symbols = std::move(mask_symbols);
  c.inference_mask = std::move(inference_mask);
  c.seed = seed;
  c.config_hash = config.hash();
  c.provenance = std::move(provenance);
  return c;
}

nlohmann::json curve_summary(const PPOResult& r) {
  return {{"selected_step", r.selected_step}, {"episodes", r.episodes}};
}

}  // namespace

Response demonstrate(const Prompt& prompt, std::span<const std::uint8_t> mask,
                     const PreferenceSpace& space, const EnvironmentConfig& env,
                     const DemonstratorConfig& demo, Rng& rng) {
  if (mask.size() != space.n_total_preferences()) {
    throw ShapeError("demonstrate: mask length does not match the preference space");
  }
  std::vector<TokenClass> favored;
  const PreferenceId* length_pref = nullptr;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    const auto& p = space.preferences()[i];
    if (is_length_objective(p.objective)) {
      if (length_pref == nullptr) length_pref = &p;
    } else {
      favored.push_back(favored_class(p.objective));
    }
  }

  int lo = demo.min_length;
  int hi = demo.max_length;
  if (length_pref != nullptr && rng.bernoulli(demo.exhibit_probability)) {
    const bool concise = length_pref->objective == Objective::kConcise;
    lo = concise ? demo.concise_min : demo.verbose_min;
    hi = concise ? demo.concise_max : demo.verbose_max;
  }
  hi = std::min(hi, env.max_length);
  lo = std::min(lo, hi);
  const int n = lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));

  const auto content = env.vocab.range(TokenClass::kContent);
  Response r;
  r.tokens.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k < n; ++k) {
    if (!favored.empty() && rng.bernoulli(demo.exhibit_probability)) {
      r.tokens.push_back(draw_from(env.vocab, favored[rng.below(favored.size())], rng));
      continue;
    }
    double u = rng.uniform();
    if ((u -= demo.target_probability) < 0.0) {
      r.tokens.push_back(prompt.target_content_token);
    } else if ((u -= demo.simple_probability) < 0.0) {
      r.tokens.push_back(draw_from(env.vocab, TokenClass::kSimple, rng));
    } else if ((u -= demo.technical_probability) < 0.0) {
      r.tokens.push_back(draw_from(env.vocab, TokenClass::kTechnical, rng));
    } else {
      TokenClass style = TokenClass::kContent;
      for (TokenClass c : kStyleClasses) {
        if ((u -= demo.style_probability) < 0.0) {
          style = c;
          break;
        }
      }
      if (style != TokenClass::kContent) {
        r.tokens.push_back(draw_from(env.vocab, style, rng));
      } else {
        // Non-target content token.
        const auto k2 = static_cast<TokenId>(rng.below(static_cast<std::size_t>(content.count - 1)));
        const TokenId t = content.first + k2;
        r.tokens.push_back(t >= prompt.target_content_token ? t + 1 : t);
      }
    }
  }
  if (n < env.max_length) r.tokens.push_back(env.vocab.eos());
  return r;
}

PreferenceMask random_partial_mask(const PreferenceSpace& space, double dimension_probability,
                                   Rng& rng) {
  PreferenceMask mask(space.n_total_preferences(), 0);
  for (const auto& dim : space.dimensions()) {
    if (rng.bernoulli(dimension_probability)) mask[dim.members[rng.below(dim.members.size())]] = 1;
  }
  return mask;
}

ParameterVector behavior_clone_step(const PolicyArchitecture& arch, const ParameterVector& params,
                                    std::span<const Demonstration> batch, double learning_rate,
                                    AdamState& adam) {
  if (batch.empty()) return params;
  std::vector<double> grad(params.size(), 0.0);
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& d : batch) {
    accumulate_logprob_grad(arch, params, d.prompt, d.mask, d.response, 1.0, w, grad);
  }
  ParameterVector next = params;
  adam_ascend(next.values, grad, adam, learning_rate);
  if (!next.all_finite()) throw std::runtime_error("behavior cloning produced non-finite parameters");
  return next;
}

PolicyCheckpoint pretrain_base(const RunConfig& config, const PreferenceSpace& space,
                               std::uint64_t seed, RunLedger* ledger) {
  const auto& pc = config.pretrain;
  const auto arch = make_policy_architecture(config.env, space, pc.hidden_width, pc.embed_dim);
  auto params = init_policy(arch, derive_seed(seed, "pretrain-init"), pc.init_scale);
  const auto prompts = training_prompts(config.env);
  Rng rng(derive_seed(seed, "pretrain-demonstrations"));
  AdamState adam;
  std::vector<Demonstration> batch(static_cast<std::size_t>(pc.batch_size));
  for (int step = 0; step < pc.steps; ++step) {
    for (auto& d : batch) {
      d.prompt = prompts[rng.below(prompts.size())];
      d.mask = random_partial_mask(space, pc.demonstrator.mask_dimension_probability, rng);
      d.response = demonstrate(d.prompt, d.mask, space, config.env, pc.demonstrator, rng);
    }
    params = behavior_clone_step(arch, params, batch, pc.learning_rate, adam);
  }
  record(ledger, {"pretrain", "BASE", "initial", space.symbols(), {}, seed,
                  static_cast<std::size_t>(pc.steps) * batch.size()});
  return make_checkpoint(arch, params, space.symbols(), {}, config, seed,
                         {{"method", "BASE"}, {"pretrain", pc.to_json()}});
}

FeedbackDataset generate_feedback(const RunConfig& config, const PolicyCheckpoint& base,
                                  const PreferenceSpace& space, std::uint64_t seed,
                                  std::span<const std::string> symbols, RunLedger* ledger,
                                  std::string_view stage) {
  const auto prompts = draw_prompts(config.env, config.feedback.prompt_draws,
                                    derive_seed(seed, "feedback-prompts"));
  auto ds = build_dataset(base, prompts, space, config.env, derive_seed(seed, "feedback"),
                          config.feedback.rollout_temperature, symbols);
  ds.metadata["config_hash"] = config.hash();
  ds.metadata["root_seed"] = seed;
  std::vector<std::string> covered;
  for (const auto& [sym, _] : ds.coverage()) covered.push_back(sym);
  record(ledger, {"feedback", "DATA", std::string(stage), covered, {}, seed, prompts.size()});
  return ds;
}

FeedbackDataset generate_general_feedback(const RunConfig& config, const PolicyCheckpoint& base,
                                          std::uint64_t seed, RunLedger* ledger) {
  const auto prompts = draw_prompts(config.env, config.feedback.general_prompt_draws,
                                    derive_seed(seed, "general-prompts"));
  auto ds = build_general_dataset(base, prompts, config.env, derive_seed(seed, "feedback-general"),
                                  config.feedback.rollout_temperature);
  ds.metadata["config_hash"] = config.hash();
  ds.metadata["root_seed"] = seed;
  record(ledger, {"feedback", "DATA", "initial", {std::string(kGeneralSymbol)}, {}, seed,
                  prompts.size()});
  return ds;
}

RewardModel train_multitask_rm(const RunConfig& config, std::span<const ComparisonRecord> records,
                               std::span<const std::string> symbols, std::uint64_t seed,
                               RunLedger* ledger, std::string_view stage) {
  auto r = train_reward_model(records, RewardVariant::kMultitask, symbols, config.reward_model,
                              config.env, derive_seed(seed, "rm/multitask"));
  r.model.seed = seed;
  r.model.config_hash = config.hash();
  r.model.provenance = {{"variant", "multitask"},
                        {"pairs", r.pairs},
                        {"mean_epoch_loss", r.mean_epoch_loss}};
  record(ledger, {"reward_model", "RM", std::string(stage),
                  std::vector<std::string>(symbols.begin(), symbols.end()), {}, seed, r.pairs});
  return r.model;
}

RewardModel train_preference_rm(const RunConfig& config,
                                std::span<const ComparisonRecord> records,
                                const std::string& symbol, std::uint64_t seed, RunLedger* ledger,
                                std::string_view stage) {
  const std::vector<std::string> symbols = {symbol};
  auto r = train_reward_model(records, RewardVariant::kPerPreference, symbols, config.reward_model,
                              config.env, derive_seed(seed, "rm/" + symbol));
  r.model.seed = seed;
  r.model.config_hash = config.hash();
  r.model.provenance = {{"variant", "per_preference"},
                        {"pairs", r.pairs},
                        {"mean_epoch_loss", r.mean_epoch_loss}};
  record(ledger, {"reward_model", "RM", std::string(stage), symbols, {}, seed, r.pairs});
  return r.model;
}

Responder run_vb(std::shared_ptr<const PolicyCheckpoint> base) {
  PreferenceMask zero(static_cast<std::size_t>(base->architecture.mask_length), 0);
  return {MethodId::kVB, std::move(base), std::move(zero)};
}

Responder run_pp(std::shared_ptr<const PolicyCheckpoint> base, const PreferenceCombination& combo,
                 const PreferenceSpace& space) {
  return {MethodId::kPP, std::move(base), combination_mask(combo, space)};
}

PolicyCheckpoint train_expert(const RunConfig& config, const PolicyCheckpoint& base,
                              const RewardModel& rm, const std::string& symbol,
                              const PreferenceSpace& space, std::uint64_t seed, RunLedger* ledger,
                              std::string_view stage, std::vector<CurveRow>* curve) {
  rm.preference_slot(symbol);
  const auto mask = single_preference_mask(symbol, space);
  const auto& ppo = config.ppo;
  const auto stream = draw_prompts(config.env, std::max(1, ppo.steps * ppo.rollouts_per_step),
                                   derive_seed(seed, "prompts/expert/" + symbol));
  const auto heldout = heldout_prompts(config.env);
  const EnvironmentConfig env = config.env;
  RewardFn reward = [&rm, &symbol, &env](const Prompt& p, std::span<const std::uint8_t>,
                                         const Response& r) {
    return score(rm, p, r, symbol, env);
  };
  auto res = train_single_objective(base.architecture, base.params, base.params, reward, mask,
                                    stream, heldout, ppo, derive_seed(seed, "ppo/" + symbol), true);
  record(ledger, {"ppo", "PSOUPS", std::string(stage), {symbol}, {}, seed, res.episodes});
  if (curve != nullptr) *curve = res.curve;
  auto prov = curve_summary(res);
  prov["method"] = "PSOUPS_EXPERT";
  prov["preference"] = symbol;
  prov["ppo"] = ppo.to_json();
  return make_checkpoint(base.architecture, res.params, space.symbols(), mask, config, seed, prov);
}

PolicyCheckpoint run_rlhf_general(const RunConfig& config, const PolicyCheckpoint& base,
                                  const RewardModel& general_rm, std::uint64_t seed,
                                  RunLedger* ledger, std::vector<CurveRow>* curve) {
  const std::string sym(kGeneralSymbol);
  general_rm.preference_slot(sym);
  const PreferenceMask zero(static_cast<std::size_t>(base.architecture.mask_length), 0);
  const auto& ppo = config.rlhf;
  const auto stream = draw_prompts(config.env, std::max(1, ppo.steps * ppo.rollouts_per_step),
                                   derive_seed(seed, "prompts/rlhf"));
  const auto heldout = heldout_prompts(config.env);
  const EnvironmentConfig env = config.env;
  RewardFn reward = [&general_rm, &sym, &env](const Prompt& p, std::span<const std::uint8_t>,
                                              const Response& r) {
    return score(general_rm, p, r, sym, env);
  };
  auto res = train_single_objective(base.architecture, base.params, base.params, reward, zero,
                                    stream, heldout, ppo, derive_seed(seed, "ppo/rlhf"), true);
  record(ledger, {"ppo", "RLHF_GENERAL", "initial", {sym}, {}, seed, res.episodes});
  if (curve != nullptr) *curve = res.curve;
  auto prov = curve_summary(res);
  prov["method"] = "RLHF_GENERAL";
  prov["training_mask"] = zero;
  prov["ppo"] = ppo.to_json();
  return make_checkpoint(base.architecture, res.params, base.mask_symbols, zero, config, seed, prov);
}

PolicyCheckpoint run_mt(const RunConfig& config, const PolicyCheckpoint& base,
                        const FeedbackDataset& dataset, const PreferenceSpace& space,
                        std::uint64_t seed, RunLedger* ledger) {
  std::vector<Demonstration> demos;
  std::set<std::string> covered;
  for (const auto& r : dataset.records) {
    if (r.kind != RelationKind::kPos1VsPos2 || !space.contains(r.preference)) continue;
    demos.push_back({make_prompt(r.prompt_id, config.env),
                     single_preference_mask(r.preference, space), r.winner()});
    covered.insert(r.preference);
  }
  if (demos.empty()) throw std::invalid_argument("run_mt: dataset has no POS1_VS_POS2 records");
  const auto& mt = config.mt;
  Rng rng(derive_seed(seed, "mt-shuffle"));
  AdamState adam;
  auto params = base.params;
  const auto bs = static_cast<std::size_t>(mt.batch_size);
  for (int epoch = 0; epoch < mt.epochs; ++epoch) {
    for (std::size_t i = demos.size(); i > 1; --i) std::swap(demos[i - 1], demos[rng.below(i)]);
    for (std::size_t start = 0; start < demos.size(); start += bs) {
      const auto n = std::min(bs, demos.size() - start);
      params = behavior_clone_step(base.architecture, params,
                                   std::span<const Demonstration>(demos).subspan(start, n),
                                   mt.learning_rate, adam);
    }
  }
  record(ledger, {"behavior_cloning", "MT", "initial",
                  std::vector<std::string>(covered.begin(), covered.end()), {}, seed,
                  demos.size() * static_cast<std::size_t>(mt.epochs)});
  return make_checkpoint(base.architecture, params, space.symbols(), {}, config, seed,
                         {{"method", "MT"},
                          {"demonstrations", demos.size()},
                          {"training_masks", "single_preference"},
                          {"mt", mt.to_json()}});
}

double pmorl_reward(const RewardModel& rm, const PreferenceCombination& combo,
                    const Prompt& prompt, const Response& response, const EnvironmentConfig& env) {
  if (combo.chosen.empty()) throw std::invalid_argument("pmorl_reward: empty combination");
  double s = 0.0;
  for (const auto& sym : combo.chosen) s += score(rm, prompt, response, sym, env);
  return s / static_cast<double>(combo.chosen.size());
}

PolicyCheckpoint run_pmorl(const RunConfig& config, const PolicyCheckpoint& base,
                           const RewardModel& multitask_rm, const PreferenceSpace& space,
                           std::uint64_t seed, RunLedger* ledger, std::string_view stage,
                           std::vector<CurveRow>* curve) {
  if (!multitask_rm.multitask()) throw std::invalid_argument("run_pmorl: reward model is not multitask");
  for (const auto& sym : space.symbols()) {
    try {
      multitask_rm.preference_slot(sym);
    } catch (const std::exception&) {
      throw PreferenceError("run_pmorl: multitask reward model does not score " + sym);
    }
  }
  const auto combos = enumerate_combinations(space);
  std::vector<PreferenceMask> masks;
  for (const auto& c : combos) masks.push_back(combination_mask(c, space));
  std::vector<std::size_t> coverage(combos.size(), 0);
  MaskFn mask_fn = [&](std::size_t, Rng& rng) {
    const auto k = rng.below(combos.size());
    ++coverage[k];
    return masks[k];
  };
  const EnvironmentConfig env = config.env;
  RewardFn reward = [&](const Prompt& p, std::span<const std::uint8_t> mask, const Response& r) {
    return pmorl_reward(multitask_rm, space.combination_from_mask(mask), p, r, env);
  };
  const auto& ppo = config.pmorl;
  const auto stream = draw_prompts(config.env, std::max(1, ppo.steps * ppo.rollouts_per_step),
                                   derive_seed(seed, "prompts/pmorl/" + std::string(stage)));
  std::vector<EvalCase> cases;
  for (const auto& p : heldout_prompts(config.env)) {
    for (const auto& m : masks) {
      cases.push_back({p, m, derive_seed(seed, "pmorl-snapshot-eval", cases.size())});
    }
  }
  auto res = train_ppo(base.architecture, base.params, base.params, reward, mask_fn, stream, cases,
                       ppo, derive_seed(seed, "ppo/pmorl/" + std::string(stage)), false);
  std::vector<std::string> covered;
  for (std::size_t k = 0; k < combos.size(); ++k) {
    if (coverage[k] > 0) covered.push_back(combos[k].code);
  }
  record(ledger, {"ppo", "PMORL", std::string(stage), space.symbols(), covered, seed, res.episodes});
  if (curve != nullptr) *curve = res.curve;
  auto prov = curve_summary(res);
  prov["method"] = "PMORL";
  prov["combinations_covered"] = covered;
  prov["ppo"] = ppo.to_json();
  return make_checkpoint(base.architecture, res.params, space.symbols(), {}, config, seed, prov);
}

std::map<std::string, PolicyCheckpoint> run_psoups(
    const RunConfig& config, const PolicyCheckpoint& base,
    const std::map<std::string, RewardModel>& rms, const PreferenceSpace& space,
    std::uint64_t seed, RunLedger* ledger, std::string_view stage,
    std::span<const std::string> symbols) {
  std::vector<std::string> todo(symbols.begin(), symbols.end());
  if (todo.empty()) todo = space.symbols();
  std::map<std::string, PolicyCheckpoint> experts;
  for (const auto& sym : todo) {
    const auto it = rms.find(sym);
    if (it == rms.end()) throw PreferenceError("run_psoups: no reward model for " + sym);
    experts.emplace(sym, train_expert(config, base, it->second, sym, space, seed, ledger, stage));
  }
  return experts;
}

std::map<std::string, Responder> psoups_responders(
    const std::map<std::string, PolicyCheckpoint>& experts, const PreferenceSpace& space) {
  std::map<std::string, Responder> out;
  for (const auto& combo : enumerate_combinations(space)) {
    auto soup = std::make_shared<const PolicyCheckpoint>(soup_for_combination(combo, space, experts));
    out[combo.code] = Responder{MethodId::kPSoups, soup, soup->inference_mask};
  }
  return out;
}

MainArtifacts train_main(const RunConfig& config, std::uint64_t seed) {
  MainArtifacts a;
  const auto& space = config.space;
  const auto symbols = space.symbols();
  a.base = pretrain_base(config, space, seed, &a.ledger);
  a.feedback = generate_feedback(config, a.base, space, seed, {}, &a.ledger);
  a.general_feedback = generate_general_feedback(config, a.base, seed, &a.ledger);
  a.multitask_rm = train_multitask_rm(config, a.feedback.records, symbols, seed, &a.ledger);
  for (const auto& sym : symbols) {
    a.preference_rms.emplace(sym, train_preference_rm(config, a.feedback.records, sym, seed,
                                                      &a.ledger));
  }
  a.general_rm = train_preference_rm(config, a.general_feedback.records,
                                     std::string(kGeneralSymbol), seed, &a.ledger);
  for (const auto& sym : symbols) {
    a.experts.emplace(sym, train_expert(config, a.base, a.preference_rms.at(sym), sym, space, seed,
                                        &a.ledger, "initial", &a.curves["expert_" + sym]));
  }
  a.rlhf = run_rlhf_general(config, a.base, a.general_rm, seed, &a.ledger, &a.curves["rlhf"]);
  a.mt = run_mt(config, a.base, a.feedback, space, seed, &a.ledger);
  a.pmorl = run_pmorl(config, a.base, a.multitask_rm, space, seed, &a.ledger, "initial",
                      &a.curves["pmorl"]);
  return a;
}

ResponderTable main_responders(const MainArtifacts& artifacts, const PreferenceSpace& space) {
  ResponderTable t;
  const auto base = std::make_shared<const PolicyCheckpoint>(artifacts.base);
  const auto rlhf = std::make_shared<const PolicyCheckpoint>(artifacts.rlhf);
  const auto mt = std::make_shared<const PolicyCheckpoint>(artifacts.mt);
  const auto pmorl = std::make_shared<const PolicyCheckpoint>(artifacts.pmorl);
  const PreferenceMask zero(space.n_total_preferences(), 0);
  for (const auto& combo : enumerate_combinations(space)) {
    const auto mask = combination_mask(combo, space);
    t[MethodId::kVB][combo.code] = run_vb(base);
    t[MethodId::kRlhfGeneral][combo.code] = Responder{MethodId::kRlhfGeneral, rlhf, zero};
    t[MethodId::kPP][combo.code] = run_pp(base, combo, space);
    t[MethodId::kMT][combo.code] = Responder{MethodId::kMT, mt, mask};
    t[MethodId::kPMORL][combo.code] = Responder{MethodId::kPMORL, pmorl, mask};
  }
  t[MethodId::kPSoups] = psoups_responders(artifacts.experts, space);
  return t;
}

MainReport evaluate_main(const MainArtifacts& artifacts, const RunConfig& config,
                         std::uint64_t seed) {
  const auto cases = evaluation_cases(config.env, derive_seed(seed, "eval"));
  const auto table = generate_response_table(main_responders(artifacts, config.space), cases,
                                             config.eval.temperature);
  MainReport r;
  r.aggregated = aggregated_matrix(table, kAllMethods, config.space, cases, config.env);
  r.helpfulness = helpfulness_tradeoff(table, kAllMethods, config.space, cases, config.env);
  return r;
}

void write_main_outputs(const std::filesystem::path& dir, const MainArtifacts& artifacts,
                        const MainReport& report, const RunConfig& config, std::uint64_t seed) {
  const auto ck = dir / "checkpoints";
  save_policy(ck / "base.ckpt", artifacts.base);
  for (const auto& [sym, e] : artifacts.experts) save_policy(ck / ("expert_" + sym + ".ckpt"), e);
  save_policy(ck / "rlhf_general.ckpt", artifacts.rlhf);
  save_policy(ck / "mt.ckpt", artifacts.mt);
  save_policy(ck / "pmorl.ckpt", artifacts.pmorl);
  for (const auto& combo : enumerate_combinations(config.space)) {
    save_policy(ck / ("soup_" + combo.code + ".ckpt"),
                soup_for_combination(combo, config.space, artifacts.experts));
  }
  save_reward_model(ck / "rm_multitask.ckpt", artifacts.multitask_rm);
  for (const auto& [sym, rm] : artifacts.preference_rms) {
    save_reward_model(ck / ("rm_" + sym + ".ckpt"), rm);
  }
  save_reward_model(ck / "rm_general.ckpt", artifacts.general_rm);
  save_dataset(dir / "data" / "feedback.jsonl", artifacts.feedback);
  save_dataset(dir / "data" / "feedback_general.jsonl", artifacts.general_feedback);
  for (const auto& [name, curve] : artifacts.curves) {
    write_file_atomic(dir / "curves" / (name + ".csv"), curve_csv(curve));
  }
  write_file_atomic(dir / "ledger.json", artifacts.ledger.to_json().dump(2) + "\n");
  const auto rep = dir / "reports";
  write_file_atomic(rep / "pairwise_winrate.csv", matrix_csv(report.aggregated));
  write_file_atomic(rep / "pairwise_detailed.csv", detailed_csv(report.aggregated));
  write_file_atomic(rep / "helpfulness_winrate.csv", matrix_csv(report.helpfulness));
  write_file_atomic(rep / "helpfulness_detailed.csv", detailed_csv(report.helpfulness));
  const nlohmann::json summary = {{"experiment", config.experiment},
                                  {"config_hash", config.hash()},
                                  {"seed", seed},
                                  {"aggregated", to_json(report.aggregated)},
                                  {"helpfulness", to_json(report.helpfulness)}};
  write_file_atomic(rep / "summary.json", summary.dump(2) + "\n");
}

nlohmann::json ScalingReport::to_json() const {
  return {{"psoups_vs_pmorl", rlphf::to_json(psoups_vs_pmorl)},
          {"psoups_new_jobs", psoups_new_jobs},
          {"pmorl_new_coverage", pmorl_new_coverage},
          {"expected_psoups_new_jobs", expected_psoups_new_jobs},
          {"expected_pmorl_new_coverage", expected_pmorl_new_coverage},
          {"ledger", ledger.to_json()}};
}

ScalingReport scaling_experiment(const RunConfig& config, std::uint64_t seed) {
  const auto& old_space = config.space;
  const auto& space = config.extended_space;
  const auto s = derive_seed(seed, "scaling");
  std::vector<std::string> old_symbols = old_space.symbols();
  std::vector<std::string> new_symbols;
  for (const auto& sym : space.symbols()) {
    if (!old_space.contains(sym)) new_symbols.push_back(sym);
  }

  ScalingReport report;
  auto& ledger = report.ledger;
  // The base understands every mask slot of the extended space from the
  // start; the extension only adds feedback and training for new symbols.
  const auto base = pretrain_base(config, space, s, &ledger);
  const auto old_fb = generate_feedback(config, base, space, s, old_symbols, &ledger, "initial");
  const auto new_fb = generate_feedback(config, base, space, s, new_symbols, &ledger, "extension");

  std::map<std::string, RewardModel> rms;
  for (const auto& sym : old_symbols) {
    rms.emplace(sym, train_preference_rm(config, old_fb.records, sym, s, &ledger, "initial"));
  }
  for (const auto& sym : new_symbols) {
    rms.emplace(sym, train_preference_rm(config, new_fb.records, sym, s, &ledger, "extension"));
  }
  auto experts = run_psoups(config, base, rms, space, s, &ledger, "initial", old_symbols);
  auto added = run_psoups(config, base, rms, space, s, &ledger, "extension", new_symbols);
  experts.merge(added);

  std::vector<ComparisonRecord> all_records = old_fb.records;
  all_records.insert(all_records.end(), new_fb.records.begin(), new_fb.records.end());
  const auto symbols = space.symbols();
  const auto mt_rm = train_multitask_rm(config, all_records, symbols, s, &ledger, "extension");
  const auto pmorl = std::make_shared<const PolicyCheckpoint>(
      run_pmorl(config, base, mt_rm, space, s, &ledger, "extension"));

  const auto cases = evaluation_cases(config.env, derive_seed(s, "eval"));
  const auto soups = psoups_responders(experts, space);
  std::vector<BattleOutcome> outcomes;
  for (const auto& combo : enumerate_combinations(space)) {
    const Responder p{MethodId::kPMORL, pmorl, combination_mask(combo, space)};
    const auto criteria = preference_criteria(combo, space, config.env);
    auto out = battle(soups.at(combo.code), p, combo.code, cases, criteria, config.eval.temperature);
    outcomes.insert(outcomes.end(), out.begin(), out.end());
  }
  report.psoups_vs_pmorl = win_rate(outcomes);
  report.psoups_new_jobs = ledger.count("ppo", "PSOUPS", "extension");
  for (const auto& job : ledger.jobs) {
    if (job.kind == "ppo" && job.method == "PMORL" && job.stage == "extension") {
      report.pmorl_new_coverage = std::max(report.pmorl_new_coverage, job.combinations.size());
    }
  }
  report.expected_psoups_new_jobs =
      incremental_cost(old_space, space, CompositionMethod::kPersonalizedSoups);
  report.expected_pmorl_new_coverage =
      incremental_cost(old_space, space, CompositionMethod::kPromptedMorl);
  return report;
}

}  // namespace rlphf
