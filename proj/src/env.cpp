// SPDX-License-Identifier: Apache-2.0
#include "rlphf/env.hpp"

#include <algorithm>
#include <string>

namespace rlphf {

namespace {

constexpr std::array<std::string_view, kTokenClassCount> kClassNames{
    "SIMPLE", "TECHNICAL", "FRIENDLY", "UNFRIENDLY", "SASSY", "SARCASTIC", "CONTENT", "EOS"};

double style_score(TokenClass own, const ResponseStats& stats) {
  double score = 0.0;
  for (auto c : kStyleClasses) score += (c == own) ? stats.fraction(c) : -stats.fraction(c);
  return score;
}

}  // namespace

std::string_view to_string(TokenClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

Vocabulary::Vocabulary(std::array<int, kTokenClassCount> class_sizes) {
  if (class_sizes[static_cast<std::size_t>(TokenClass::kEos)] != 1) {
    throw EnvironmentError("vocabulary: EOS class must hold exactly one token");
  }
  if (class_sizes[static_cast<std::size_t>(TokenClass::kContent)] < 1) {
    throw EnvironmentError("vocabulary: CONTENT class must not be empty");
  }
  TokenId next = 0;
  for (std::size_t c = 0; c < kTokenClassCount; ++c) {
    if (class_sizes[c] < 0) throw EnvironmentError("vocabulary: negative class size");
    ranges_[c] = TokenRange{next, class_sizes[c]};
    next += class_sizes[c];
  }
  size_ = next;
}

Vocabulary Vocabulary::default_vocabulary() { return Vocabulary({4, 4, 3, 3, 3, 3, 11, 1}); }

TokenClass Vocabulary::class_of(TokenId token) const {
  if (token < 0 || token >= size_) {
    throw EnvironmentError("token id " + std::to_string(token) + " outside vocabulary of size " +
                           std::to_string(size_));
  }
  for (std::size_t c = 0; c < kTokenClassCount; ++c) {
    if (ranges_[c].contains(token)) return static_cast<TokenClass>(c);
  }
  throw EnvironmentError("unreachable: token without class");
}

std::array<int, kTokenClassCount> Vocabulary::class_sizes() const {
  std::array<int, kTokenClassCount> out{};
  for (std::size_t c = 0; c < kTokenClassCount; ++c) out[c] = ranges_[c].count;
  return out;
}

nlohmann::json EnvironmentConfig::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  const auto sizes = vocab.class_sizes();
  for (std::size_t c = 0; c < kTokenClassCount; ++c) {
    classes[std::string(kClassNames[c])] = sizes[c];
  }
  return {{"vocab_classes", classes},
          {"max_length", max_length},
          {"train_prompts", train_prompts},
          {"eval_prompts", eval_prompts},
          {"eval_rounds", eval_rounds},
          {"judge_epsilon", judge_epsilon},
          {"helpfulness_cap", helpfulness_cap}};
}

EnvironmentConfig EnvironmentConfig::from_json(const nlohmann::json& j) {
  EnvironmentConfig env;
  if (j.contains("vocab_classes")) {
    auto sizes = env.vocab.class_sizes();
    for (const auto& [name, size] : j.at("vocab_classes").items()) {
      auto it = std::find(kClassNames.begin(), kClassNames.end(), name);
      if (it == kClassNames.end()) throw EnvironmentError("unknown token class '" + name + "'");
      sizes[static_cast<std::size_t>(it - kClassNames.begin())] = size.get<int>();
    }
    env.vocab = Vocabulary(sizes);
  }
  env.max_length = j.value("max_length", env.max_length);
  env.train_prompts = j.value("train_prompts", env.train_prompts);
  env.eval_prompts = j.value("eval_prompts", env.eval_prompts);
  env.eval_rounds = j.value("eval_rounds", env.eval_rounds);
  env.judge_epsilon = j.value("judge_epsilon", env.judge_epsilon);
  env.helpfulness_cap = j.value("helpfulness_cap", env.helpfulness_cap);
  if (env.max_length < 1 || env.train_prompts < 1 || env.eval_prompts < 1 ||
      env.eval_rounds < 1 || env.helpfulness_cap < 1 || env.judge_epsilon < 0.0) {
    throw EnvironmentError("environment config: lengths, counts and cap must be positive");
  }
  return env;
}

Prompt make_prompt(int id, const EnvironmentConfig& env) {
  if (id < 0) throw EnvironmentError("negative prompt id");
  const auto content = env.vocab.range(TokenClass::kContent);
  Prompt p;
  p.id = id;
  p.topic = id % content.count;
  p.target_content_token = content.first + p.topic;
  return p;
}

std::vector<Prompt> training_prompts(const EnvironmentConfig& env) {
  std::vector<Prompt> out;
  for (int i = 0; i < env.train_prompts; ++i) out.push_back(make_prompt(i, env));
  return out;
}

std::vector<Prompt> heldout_prompts(const EnvironmentConfig& env) {
  std::vector<Prompt> out;
  for (int i = 0; i < env.eval_prompts; ++i) out.push_back(make_prompt(env.train_prompts + i, env));
  return out;
}

std::size_t Response::effective_length(TokenId eos) const {
  auto it = std::find(tokens.begin(), tokens.end(), eos);
  return static_cast<std::size_t>(it - tokens.begin());
}

std::span<const TokenId> Response::scored_prefix(TokenId eos) const {
  auto n = effective_length(eos);
  if (n < tokens.size()) ++n;
  return std::span<const TokenId>(tokens.data(), n);
}

ResponseStats compute_stats(const Response& response, const Prompt& prompt,
                            const EnvironmentConfig& env) {
  if (response.tokens.size() > static_cast<std::size_t>(env.max_length)) {
    throw EnvironmentError("response of " + std::to_string(response.tokens.size()) +
                           " tokens exceeds max length " + std::to_string(env.max_length));
  }
  ResponseStats s;
  const TokenId eos = env.vocab.eos();
  // validates every token, including those after EOS
  for (TokenId t : response.tokens) env.vocab.class_of(t);
  s.effective_length = response.effective_length(eos);
  for (std::size_t i = 0; i < s.effective_length; ++i) {
    const TokenId t = response.tokens[i];
    ++s.class_count[static_cast<std::size_t>(env.vocab.class_of(t))];
    if (t == prompt.target_content_token) ++s.target_count;
  }
  const double denom = static_cast<double>(std::max<std::size_t>(1, s.effective_length));
  for (std::size_t c = 0; c < kTokenClassCount; ++c) s.class_fraction[c] = s.class_count[c] / denom;
  s.length_fraction = static_cast<double>(s.effective_length) / env.max_length;
  s.helpfulness =
      static_cast<double>(std::min(s.target_count, env.helpfulness_cap)) / env.helpfulness_cap;
  return s;
}

TokenClass favored_class(Objective objective) {
  switch (objective) {
    case Objective::kSimple: return TokenClass::kSimple;
    case Objective::kTechnical: return TokenClass::kTechnical;
    case Objective::kFriendly: return TokenClass::kFriendly;
    case Objective::kUnfriendly: return TokenClass::kUnfriendly;
    case Objective::kSassy: return TokenClass::kSassy;
    case Objective::kSarcastic: return TokenClass::kSarcastic;
    case Objective::kConcise:
    case Objective::kVerbose: return TokenClass::kEos;
  }
  return TokenClass::kEos;
}

bool is_length_objective(Objective objective) {
  return objective == Objective::kConcise || objective == Objective::kVerbose;
}

double preference_score(const PreferenceId& pref, const ResponseStats& stats) {
  switch (pref.objective) {
    case Objective::kSimple:
      return stats.fraction(TokenClass::kSimple) - stats.fraction(TokenClass::kTechnical);
    case Objective::kTechnical:
      return stats.fraction(TokenClass::kTechnical) - stats.fraction(TokenClass::kSimple);
    case Objective::kConcise: return 1.0 - stats.length_fraction;
    case Objective::kVerbose: return stats.length_fraction;
    case Objective::kFriendly:
    case Objective::kUnfriendly:
    case Objective::kSassy:
    case Objective::kSarcastic: return style_score(favored_class(pref.objective), stats);
  }
  return 0.0;
}

double preference_score(const PreferenceSpace& space, std::string_view symbol,
                        const ResponseStats& stats) {
  return preference_score(space.find(symbol), stats);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kWin: return "WIN";
    case Verdict::kTie: return "TIE";
    case Verdict::kLose: return "LOSE";
  }
  return "?";
}

Verdict compare_scores(double score_a, double score_b, double epsilon) {
  const double d = score_a - score_b;
  if (d > epsilon) return Verdict::kWin;
  if (d < -epsilon) return Verdict::kLose;
  return Verdict::kTie;
}

Verdict oracle_judge(const PreferenceId& pref, const Response& a, const Response& b,
                     const Prompt& prompt, const EnvironmentConfig& env) {
  return compare_scores(preference_score(pref, compute_stats(a, prompt, env)),
                        preference_score(pref, compute_stats(b, prompt, env)),
                        env.judge_epsilon);
}

Verdict helpfulness_judge(const Response& a, const Response& b, const Prompt& prompt,
                          const EnvironmentConfig& env) {
  return compare_scores(compute_stats(a, prompt, env).helpfulness,
                        compute_stats(b, prompt, env).helpfulness, env.judge_epsilon);
}

}  // namespace rlphf
