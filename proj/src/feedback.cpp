// SPDX-License-Identifier: Apache-2.0
#include "rlphf/feedback.hpp"

#include <array>
#include <sstream>

#include "rlphf/rng.hpp"

namespace rlphf {

namespace {

constexpr std::array<std::pair<RelationKind, std::string_view>, 5> kKindNames{{
    {RelationKind::kPos1VsPos2, "POS1_VS_POS2"},
    {RelationKind::kPosVsNeutral, "POS_VS_NEUTRAL"},
    {RelationKind::kPosVsNegative, "POS_VS_NEGATIVE"},
    {RelationKind::kNeutralVsNegative, "NEUTRAL_VS_NEGATIVE"},
    {RelationKind::kGeneralPair, "GENERAL_PAIR"},
}};

Label tie_break(std::uint64_t seed) { return Rng(seed).bernoulli(0.5) ? Label::kA : Label::kB; }

}  // namespace

std::string_view to_string(RelationKind kind) {
  for (const auto& [k, n] : kKindNames) {
    if (k == kind) return n;
  }
  return "?";
}

RelationKind relation_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown relation kind '" + std::string(name) + "'");
}

nlohmann::json ComparisonRecord::to_json() const {
  return {{"v", kFeedbackFormatVersion},
          {"draw", draw},
          {"prompt", prompt_id},
          {"pref", preference},
          {"kind", std::string(to_string(kind))},
          {"a", a.tokens},
          {"b", b.tokens},
          {"label", label == Label::kA ? "A" : "B"},
          {"tie_broken", tie_broken},
          {"positive_slot", positive_slot}};
}

ComparisonRecord ComparisonRecord::from_json(const nlohmann::json& j) {
  if (j.value("v", 0) != kFeedbackFormatVersion) {
    throw std::invalid_argument("unsupported comparison record version");
  }
  ComparisonRecord r;
  r.draw = j.at("draw").get<int>();
  r.prompt_id = j.at("prompt").get<int>();
  r.preference = j.at("pref").get<std::string>();
  r.kind = relation_kind_from_string(j.at("kind").get<std::string>());
  r.a.tokens = j.at("a").get<std::vector<TokenId>>();
  r.b.tokens = j.at("b").get<std::vector<TokenId>>();
  const auto label = j.at("label").get<std::string>();
  if (label != "A" && label != "B") throw std::invalid_argument("label must be A or B");
  r.label = label == "A" ? Label::kA : Label::kB;
  r.tie_broken = j.value("tie_broken", false);
  r.positive_slot = j.value("positive_slot", 0);
  return r;
}

std::map<std::string, std::size_t> FeedbackDataset::coverage() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records) ++out[r.preference];
  return out;
}

Candidates generate_candidates(const PolicyCheckpoint& rollout, const Prompt& prompt,
                               const PreferenceSpace& space, std::string_view pref,
                               std::uint64_t seed, double temperature) {
  const auto& p = space.find(pref);
  const auto& dim = space.dimensions()[static_cast<std::size_t>(p.dimension_id)];
  std::vector<std::string> rivals;
  for (auto m : dim.members) {
    if (space.preferences()[m].symbol != p.symbol) rivals.push_back(space.preferences()[m].symbol);
  }
  if (rivals.empty()) {
    throw PreferenceError("preference '" + p.symbol + "' has no conflicting preference in '" +
                          dim.name + "'");
  }
  const auto& arch = rollout.architecture;
  const auto own = single_preference_mask(p.symbol, space);
  const PreferenceMask neutral(space.n_total_preferences(), 0);
  Rng pick(derive_seed(seed, "negative-choice"));
  Candidates c;
  c.negative_preference = rivals[pick.below(rivals.size())];
  const auto rival = single_preference_mask(c.negative_preference, space);
  c.positive_1 = sample_response(arch, rollout.params, prompt, own,
                                 derive_seed(seed, "positive-1"), temperature);
  c.positive_2 = sample_response(arch, rollout.params, prompt, own,
                                 derive_seed(seed, "positive-2"), temperature);
  c.neutral = sample_response(arch, rollout.params, prompt, neutral,
                              derive_seed(seed, "neutral"), temperature);
  c.negative = sample_response(arch, rollout.params, prompt, rival,
                               derive_seed(seed, "negative"), temperature);
  return c;
}

ComparisonRecord judge_positives(const PreferenceId& pref, const Response& pos1,
                                 const Response& pos2, const Prompt& prompt,
                                 const EnvironmentConfig& env, std::uint64_t tie_seed) {
  ComparisonRecord r;
  r.prompt_id = prompt.id;
  r.preference = pref.symbol;
  r.kind = RelationKind::kPos1VsPos2;
  r.a = pos1;
  r.b = pos2;
  switch (oracle_judge(pref, pos1, pos2, prompt, env)) {
    case Verdict::kWin: r.label = Label::kA; break;
    case Verdict::kLose: r.label = Label::kB; break;
    case Verdict::kTie:
      r.label = tie_break(tie_seed);
      r.tie_broken = true;
      break;
  }
  return r;
}

FeedbackDataset build_dataset(const PolicyCheckpoint& rollout, std::span<const Prompt> prompts,
                              const PreferenceSpace& space, const EnvironmentConfig& env,
                              std::uint64_t seed, double temperature,
                              std::span<const std::string> symbols) {
  std::vector<std::string> covered(symbols.begin(), symbols.end());
  if (covered.empty()) covered = space.symbols();
  FeedbackDataset ds;
  ds.seed = seed;
  ds.records.reserve(prompts.size() * covered.size() * 4);
  for (std::size_t draw = 0; draw < prompts.size(); ++draw) {
    const auto& prompt = prompts[draw];
    for (const auto& sym : covered) {
      const auto& pref = space.find(sym);
      const std::uint64_t cell = derive_seed(seed, "feedback/" + sym, draw);
      const auto c = generate_candidates(rollout, prompt, space, sym, cell, temperature);
      Rng slots(derive_seed(cell, "positive-slot"));

      auto base = [&](RelationKind kind, const Response& a, const Response& b, int slot) {
        ComparisonRecord r;
        r.draw = static_cast<int>(draw);
        r.prompt_id = prompt.id;
        r.preference = sym;
        r.kind = kind;
        r.a = a;
        r.b = b;
        r.label = Label::kA;
        r.positive_slot = slot;
        return r;
      };

      auto judged = judge_positives(pref, c.positive_1, c.positive_2, prompt, env,
                                    derive_seed(cell, "tie-break"));
      judged.draw = static_cast<int>(draw);
      ds.records.push_back(std::move(judged));
      const int s1 = slots.bernoulli(0.5) ? 1 : 2;
      ds.records.push_back(base(RelationKind::kPosVsNeutral,
                                s1 == 1 ? c.positive_1 : c.positive_2, c.neutral, s1));
      const int s2 = slots.bernoulli(0.5) ? 1 : 2;
      ds.records.push_back(base(RelationKind::kPosVsNegative,
                                s2 == 1 ? c.positive_1 : c.positive_2, c.negative, s2));
      ds.records.push_back(base(RelationKind::kNeutralVsNegative, c.neutral, c.negative, 0));
    }
  }
  ds.metadata = {{"kind", "preference"},
                 {"prompt_draws", prompts.size()},
                 {"preferences", covered},
                 {"rollout_temperature", temperature},
                 {"neutral_source", "rollout policy, zero mask"},
                 {"negative_source", "rollout policy, mask of a rival preference in the same "
                                     "dimension chosen uniformly"}};
  return ds;
}

FeedbackDataset build_general_dataset(const PolicyCheckpoint& rollout,
                                      std::span<const Prompt> prompts,
                                      const EnvironmentConfig& env, std::uint64_t seed,
                                      double temperature) {
  FeedbackDataset ds;
  ds.seed = seed;
  const PreferenceMask zero(static_cast<std::size_t>(rollout.architecture.mask_length), 0);
  for (std::size_t draw = 0; draw < prompts.size(); ++draw) {
    const auto& prompt = prompts[draw];
    const std::uint64_t cell = derive_seed(seed, "feedback/general", draw);
    ComparisonRecord r;
    r.draw = static_cast<int>(draw);
    r.prompt_id = prompt.id;
    r.preference = std::string(kGeneralSymbol);
    r.kind = RelationKind::kGeneralPair;
    r.a = sample_response(rollout.architecture, rollout.params, prompt, zero,
                          derive_seed(cell, "sample-a"), temperature);
    r.b = sample_response(rollout.architecture, rollout.params, prompt, zero,
                          derive_seed(cell, "sample-b"), temperature);
    switch (helpfulness_judge(r.a, r.b, prompt, env)) {
      case Verdict::kWin: r.label = Label::kA; break;
      case Verdict::kLose: r.label = Label::kB; break;
      case Verdict::kTie:
        r.label = tie_break(derive_seed(cell, "tie-break"));
        r.tie_broken = true;
        break;
    }
    ds.records.push_back(std::move(r));
  }
  ds.metadata = {{"kind", "general"},
                 {"prompt_draws", prompts.size()},
                 {"rollout_temperature", temperature},
                 {"judge", "helpfulness"}};
  return ds;
}

std::vector<Prompt> draw_prompts(const EnvironmentConfig& env, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Prompt> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(make_prompt(static_cast<int>(rng.below(static_cast<std::size_t>(env.train_prompts))), env));
  }
  return out;
}

std::string to_jsonl(const FeedbackDataset& dataset) {
  std::string out;
  for (const auto& r : dataset.records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<ComparisonRecord> records_from_jsonl(const std::string& text,
                                                 const std::string& origin) {
  std::vector<ComparisonRecord> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(ComparisonRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": malformed comparison record: " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const FeedbackDataset& dataset) {
  write_file_atomic(path, to_jsonl(dataset));
  nlohmann::json meta = {{"format_version", kFeedbackFormatVersion},
                         {"seed", dataset.seed},
                         {"records", dataset.records.size()},
                         {"metadata", dataset.metadata}};
  write_file_atomic(path.string() + ".meta.json", meta.dump(2) + "\n");
}

FeedbackDataset load_dataset(const std::filesystem::path& path) {
  FeedbackDataset ds;
  ds.records = records_from_jsonl(read_file(path), path.string());
  const std::filesystem::path meta_path = path.string() + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = nlohmann::json::parse(read_file(meta_path));
    ds.seed = meta.value("seed", std::uint64_t{0});
    ds.metadata = meta.value("metadata", nlohmann::json::object());
  }
  return ds;
}

}  // namespace rlphf
