// SPDX-License-Identifier: Apache-2.0
// Command-line front end: one subcommand per pipeline stage plus the
// end-to-end experiments.
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rlphf/checkpoint.hpp"
#include "rlphf/config.hpp"
#include "rlphf/eval.hpp"
#include "rlphf/feedback.hpp"
#include "rlphf/merge.hpp"
#include "rlphf/orchestrate.hpp"
#include "rlphf/reward_model.hpp"

namespace fs = std::filesystem;
using namespace rlphf;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
};

Context load(const Common& c) {
  Context ctx;
  if (!c.config_path.empty()) ctx.config = load_config(c.config_path);
  ctx.seed = c.seed.value_or(ctx.config.seed);
  return ctx;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run config (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "root seed (overrides the config's seed)");
}

fs::path out_or(const std::string& out, const fs::path& fallback) {
  return out.empty() ? fallback : fs::path(out);
}

std::map<std::string, PolicyCheckpoint> load_experts(const fs::path& dir,
                                                     const std::vector<std::string>& symbols) {
  std::map<std::string, PolicyCheckpoint> experts;
  for (const auto& sym : symbols) {
    const auto path = dir / ("expert_" + sym + ".ckpt");
    if (!fs::exists(path)) continue;
    experts.emplace(sym, load_policy(path));
  }
  return experts;
}

PreferenceMask pick_mask(const std::string& mode, const PolicyCheckpoint& ckpt,
                         const PreferenceCombination& combo, const PreferenceSpace& space) {
  if (mode == "stored") return ckpt.effective_mask();
  if (mode == "combo") return combination_mask(combo, space);
  if (mode == "zero") return PreferenceMask(space.n_total_preferences(), 0);
  throw std::invalid_argument("unknown mask mode '" + mode + "' (stored, combo, zero)");
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale personalized RLHF lab"};
  app.require_subcommand(1);
  Common common;

  std::string out, base_path, rm_path, data_path, pref, variant = "per-preference";
  std::string combo_code, experts_dir, mode = "full", reference_path, a_path, b_path;
  std::string a_mask = "stored", b_mask = "stored";
  std::vector<std::string> inputs;
  std::vector<double> weights;
  bool general = false;

  auto* pretrain = app.add_subcommand("pretrain", "behavior-clone the base policy");
  add_common(pretrain, common);
  pretrain->add_option("--out", out, "checkpoint path");

  auto* gen = app.add_subcommand("gen-feedback", "simulate annotator comparisons");
  add_common(gen, common);
  gen->add_option("--base", base_path, "rollout policy checkpoint")->required();
  gen->add_option("--out", out, "dataset path (.jsonl)");
  gen->add_flag("--general", general, "helpfulness-judged pairs for general RLHF");

  auto* train_rm = app.add_subcommand("train-rm", "train a reward model");
  add_common(train_rm, common);
  train_rm->add_option("--data", data_path, "feedback dataset")->required();
  train_rm->add_option("--variant", variant, "multitask or per-preference")
      ->check(CLI::IsMember({"multitask", "per-preference"}));
  train_rm->add_option("--pref", pref, "preference symbol (per-preference; GENERAL allowed)");
  train_rm->add_option("--out", out, "checkpoint path");

  auto* expert = app.add_subcommand("train-expert", "single-preference PPO expert");
  add_common(expert, common);
  expert->add_option("--pref", pref, "preference symbol")->required();
  expert->add_option("--base", base_path, "base checkpoint")->required();
  expert->add_option("--rm", rm_path, "per-preference reward model")->required();
  expert->add_option("--out", out, "checkpoint path");

  auto* pmorl = app.add_subcommand("train-pmorl", "prompted multi-objective PPO");
  add_common(pmorl, common);
  pmorl->add_option("--base", base_path, "base checkpoint")->required();
  pmorl->add_option("--rm", rm_path, "multitask reward model")->required();
  pmorl->add_option("--out", out, "checkpoint path");

  auto* rlhf = app.add_subcommand("train-rlhf", "zero-mask PPO on the general reward model");
  add_common(rlhf, common);
  rlhf->add_option("--base", base_path, "base checkpoint")->required();
  rlhf->add_option("--rm", rm_path, "general reward model")->required();
  rlhf->add_option("--out", out, "checkpoint path");

  auto* mt = app.add_subcommand("train-mt", "behavior cloning on oracle-selected winners");
  add_common(mt, common);
  mt->add_option("--base", base_path, "base checkpoint")->required();
  mt->add_option("--data", data_path, "feedback dataset")->required();
  mt->add_option("--out", out, "checkpoint path");

  auto* merge_cmd = app.add_subcommand("merge", "parameter soup of expert checkpoints");
  add_common(merge_cmd, common);
  auto* combo_opt = merge_cmd->add_option("--combo", combo_code, "combination code, e.g. AAA");
  auto* weights_opt = merge_cmd->add_option("--weights", weights, "explicit weights")->delimiter(',');
  combo_opt->excludes(weights_opt);
  merge_cmd->add_option("--experts", experts_dir, "directory holding expert_<SYM>.ckpt");
  merge_cmd->add_option("--inputs", inputs, "checkpoints for --weights")->delimiter(',');
  merge_cmd->add_option("--mode", mode, "full or delta")->check(CLI::IsMember({"full", "delta"}));
  merge_cmd->add_option("--reference", reference_path, "reference checkpoint for delta mode");
  merge_cmd->add_option("--out", out, "checkpoint path")->required();

  auto* evaluate = app.add_subcommand("evaluate", "oracle battle between two checkpoints");
  add_common(evaluate, common);
  evaluate->add_option("--a", a_path, "checkpoint A")->required();
  evaluate->add_option("--b", b_path, "checkpoint B")->required();
  evaluate->add_option("--combo", combo_code, "judge one combination (default: all)");
  evaluate->add_option("--a-mask", a_mask, "stored, combo or zero");
  evaluate->add_option("--b-mask", b_mask, "stored, combo or zero");
  evaluate->add_option("--out", out, "report CSV path (stdout when omitted)");

  auto* experiment = app.add_subcommand("experiment", "end-to-end experiments");
  std::string which;
  add_common(experiment, common);
  experiment->add_option("name", which, "main, helpfulness or scaling")
      ->required()
      ->check(CLI::IsMember({"main", "helpfulness", "scaling"}));
  experiment->add_option("--out", out, "output directory (default: config output_dir)");

  auto* verify = app.add_subcommand("verify", "re-check checkpoint fingerprints");
  add_common(verify, common);
  std::vector<std::string> verify_paths;
  verify->add_option("paths", verify_paths, "checkpoint files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const Context ctx = load(common);
    const auto& cfg = ctx.config;
    const auto seed = ctx.seed;
    const fs::path dir = cfg.output_dir;

    if (*pretrain) {
      const auto base = pretrain_base(cfg, cfg.space, seed);
      const auto path = out_or(out, dir / "checkpoints" / "base.ckpt");
      save_policy(path, base);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*gen) {
      const auto base = load_policy(base_path);
      const auto ds = general ? generate_general_feedback(cfg, base, seed)
                              : generate_feedback(cfg, base, cfg.space, seed);
      const auto path = out_or(out, dir / "data" / (general ? "feedback_general.jsonl"
                                                            : "feedback.jsonl"));
      save_dataset(path, ds);
      std::cout << "wrote " << path.string() << " (" << ds.records.size() << " records)\n";
    } else if (*train_rm) {
      const auto ds = load_dataset(data_path);
      RewardModel rm;
      std::string name;
      if (variant == "multitask") {
        rm = train_multitask_rm(cfg, ds.records, cfg.space.symbols(), seed);
        name = "rm_multitask.ckpt";
      } else {
        if (pref.empty()) throw std::invalid_argument("train-rm: --pref is required for per-preference");
        if (pref != kGeneralSymbol) cfg.space.find(pref);
        rm = train_preference_rm(cfg, ds.records, pref, seed);
        name = pref == kGeneralSymbol ? "rm_general.ckpt" : "rm_" + pref + ".ckpt";
      }
      const auto path = out_or(out, dir / "checkpoints" / name);
      save_reward_model(path, rm);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*expert) {
      cfg.space.find(pref);
      const auto e = train_expert(cfg, load_policy(base_path), load_reward_model(rm_path), pref,
                                  cfg.space, seed);
      const auto path = out_or(out, dir / "checkpoints" / ("expert_" + pref + ".ckpt"));
      save_policy(path, e);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*pmorl) {
      const auto p = run_pmorl(cfg, load_policy(base_path), load_reward_model(rm_path), cfg.space,
                               seed);
      const auto path = out_or(out, dir / "checkpoints" / "pmorl.ckpt");
      save_policy(path, p);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*rlhf) {
      const auto p = run_rlhf_general(cfg, load_policy(base_path), load_reward_model(rm_path), seed);
      const auto path = out_or(out, dir / "checkpoints" / "rlhf_general.ckpt");
      save_policy(path, p);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*mt) {
      const auto p = run_mt(cfg, load_policy(base_path), load_dataset(data_path), cfg.space, seed);
      const auto path = out_or(out, dir / "checkpoints" / "mt.ckpt");
      save_policy(path, p);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*merge_cmd) {
      PolicyCheckpoint result;
      if (!combo_code.empty()) {
        const auto combo = cfg.space.combination_from_code(combo_code);
        const fs::path edir = experts_dir.empty() ? dir / "checkpoints" : fs::path(experts_dir);
        result = soup_for_combination(combo, cfg.space, load_experts(edir, combo.chosen));
      } else {
        if (weights.empty() || inputs.empty()) {
          throw std::invalid_argument("merge: give --combo, or --weights with --inputs");
        }
        std::vector<PolicyCheckpoint> ckpts;
        for (const auto& p : inputs) ckpts.push_back(load_policy(p));
        std::optional<PolicyCheckpoint> ref;
        MergeSpec spec;
        for (const auto& c : ckpts) spec.inputs.push_back(&c.params);
        spec.weights = weights;
        if (mode == "delta") {
          if (reference_path.empty()) throw std::invalid_argument("merge: delta mode needs --reference");
          ref = load_policy(reference_path);
          spec.mode = MergeMode::kDelta;
          spec.reference = &ref->params;
        }
        result = ckpts.front();
        result.params = merge(spec);
        result.seed = seed;
        result.config_hash = cfg.hash();
        result.provenance = {{"method", "MERGE"},
                             {"constituents", inputs},
                             {"weights", weights},
                             {"mode", to_string(spec.mode)}};
        if (ref) result.provenance["reference"] = reference_path;
      }
      save_policy(out, result);
      std::cout << "wrote " << out << "\n";
    } else if (*evaluate) {
      auto a = std::make_shared<const PolicyCheckpoint>(load_policy(a_path));
      auto b = std::make_shared<const PolicyCheckpoint>(load_policy(b_path));
      const auto cases = evaluation_cases(cfg.env, derive_seed(seed, "eval"));
      std::vector<PreferenceCombination> combos;
      if (combo_code.empty()) {
        combos = enumerate_combinations(cfg.space);
      } else {
        combos.push_back(cfg.space.combination_from_code(combo_code));
      }
      std::vector<BattleOutcome> all;
      for (const auto& combo : combos) {
        const Responder ra{MethodId::kVB, a, pick_mask(a_mask, *a, combo, cfg.space)};
        const Responder rb{MethodId::kVB, b, pick_mask(b_mask, *b, combo, cfg.space)};
        const auto criteria = preference_criteria(combo, cfg.space, cfg.env);
        auto o = battle(ra, rb, combo.code, cases, criteria, cfg.eval.temperature);
        all.insert(all.end(), o.begin(), o.end());
      }
      write_text(out, report_csv(win_rate(all)));
    } else if (*experiment) {
      const fs::path odir = out_or(out, dir);
      if (which == "scaling") {
        const auto r = scaling_experiment(cfg, seed);
        nlohmann::json j = r.to_json();
        j["config_hash"] = cfg.hash();
        j["seed"] = seed;
        write_file_atomic(odir / "reports" / "scaling.csv", report_csv(r.psoups_vs_pmorl));
        write_file_atomic(odir / "reports" / "scaling.json", j.dump(2) + "\n");
        std::cout << "PSOUPS vs PMORL (extended space): "
                  << format_rate(r.psoups_vs_pmorl.win_rate()) << "%, new jobs PSOUPS "
                  << r.psoups_new_jobs << ", PMORL combinations " << r.pmorl_new_coverage << "\n";
      } else {
        const auto artifacts = train_main(cfg, seed);
        const auto report = evaluate_main(artifacts, cfg, seed);
        if (which == "main") {
          write_main_outputs(odir, artifacts, report, cfg, seed);
          std::cout << matrix_csv(report.aggregated);
        } else {
          write_file_atomic(odir / "reports" / "helpfulness_winrate.csv",
                            matrix_csv(report.helpfulness));
          write_file_atomic(odir / "reports" / "helpfulness_detailed.csv",
                            detailed_csv(report.helpfulness));
          std::cout << matrix_csv(report.helpfulness);
        }
      }
      std::cout << "outputs in " << odir.string() << "\n";
    } else if (*verify) {
      bool ok = true;
      for (const auto& p : verify_paths) {
        const auto r = verify_checkpoint(p);
        (r.ok ? std::cout : std::cerr) << r.message << "\n";
        ok = ok && r.ok;
      }
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 4;
  } catch (const MergeError& e) {
    std::cerr << "merge error: " << e.what() << "\n";
    return 5;
  } catch (const PreferenceError& e) {
    std::cerr << "preference error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
