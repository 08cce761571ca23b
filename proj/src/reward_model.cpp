// SPDX-License-Identifier: Apache-2.0
#include "rlphf/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rlphf/rng.hpp"

namespace rlphf {

namespace {

struct RewardLayout {
  std::size_t w_in, b_in, w_out, b_out, total;
  explicit RewardLayout(const RewardArchitecture& a) {
    const auto H = static_cast<std::size_t>(a.hidden_width);
    const auto D = static_cast<std::size_t>(a.input_width());
    w_in = 0;
    b_in = H * D;
    w_out = b_in + H;
    b_out = w_out + H;
    total = b_out + 1;
  }
};

void check_reward_compatible(const RewardArchitecture& arch, const ParameterVector& params) {
  if (params.fingerprint != arch.fingerprint() || params.size() != arch.parameter_count()) {
    throw ShapeError("reward model parameters do not match the architecture");
  }
}

/// Forward pass keeping hidden activations.
double forward(const RewardArchitecture& arch, const std::vector<double>& p,
               std::span<const double> x, std::vector<double>& hidden) {
  const RewardLayout L(arch);
  const auto H = static_cast<std::size_t>(arch.hidden_width);
  const auto D = static_cast<std::size_t>(arch.input_width());
  hidden.resize(H);
  double s = p[L.b_out];
  for (std::size_t h = 0; h < H; ++h) {
    const double* row = &p[L.w_in + h * D];
    double z = p[L.b_in + h];
    for (std::size_t i = 0; i < D; ++i) {
      if (x[i] != 0.0) z += row[i] * x[i];
    }
    hidden[h] = std::tanh(z);
    s += p[L.w_out + h] * hidden[h];
  }
  return s;
}

/// Adds weight * d score / d params into grad.
void backward(const RewardArchitecture& arch, const std::vector<double>& p,
              std::span<const double> x, const std::vector<double>& hidden, double weight,
              std::vector<double>& grad) {
  const RewardLayout L(arch);
  const auto H = static_cast<std::size_t>(arch.hidden_width);
  const auto D = static_cast<std::size_t>(arch.input_width());
  grad[L.b_out] += weight;
  for (std::size_t h = 0; h < H; ++h) {
    grad[L.w_out + h] += weight * hidden[h];
    const double g = weight * p[L.w_out + h] * (1.0 - hidden[h] * hidden[h]);
    if (g == 0.0) continue;
    grad[L.b_in + h] += g;
    double* grow = &grad[L.w_in + h * D];
    for (std::size_t i = 0; i < D; ++i) {
      if (x[i] != 0.0) grow[i] += g * x[i];
    }
  }
}

/// -log sigmoid(d), computed without overflow.
double softplus_neg(double d) { return d > 0 ? std::log1p(std::exp(-d)) : -d + std::log1p(std::exp(d)); }

double sigmoid(double d) {
  return d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
}

}  // namespace

std::size_t RewardArchitecture::parameter_count() const { return RewardLayout(*this).total; }

std::uint64_t RewardArchitecture::fingerprint() const {
  std::string key = "reward/v" + std::to_string(kRewardLayoutVersion) + "/" +
                    std::to_string(prompt_count) + "/" + std::to_string(kRewardStatFeatures) +
                    "/" + std::to_string(preference_count) + "/" + std::to_string(hidden_width);
  return fnv1a64(key);
}

void RewardArchitecture::validate() const {
  if (prompt_count < 1 || preference_count < 0 || hidden_width < 1) {
    throw ShapeError("reward architecture: sizes must be positive");
  }
}

nlohmann::json RewardArchitecture::to_json() const {
  return {{"prompt_count", prompt_count},
          {"preference_count", preference_count},
          {"hidden_width", hidden_width},
          {"stat_features", kRewardStatFeatures},
          {"layout_version", kRewardLayoutVersion}};
}

RewardArchitecture RewardArchitecture::from_json(const nlohmann::json& j) {
  if (j.value("layout_version", 0) != kRewardLayoutVersion ||
      j.value("stat_features", 0) != kRewardStatFeatures) {
    throw ShapeError("reward architecture: unsupported layout");
  }
  RewardArchitecture a;
  a.prompt_count = j.at("prompt_count").get<int>();
  a.preference_count = j.at("preference_count").get<int>();
  a.hidden_width = j.at("hidden_width").get<int>();
  a.validate();
  return a;
}

std::size_t RewardModel::preference_slot(std::string_view symbol) const {
  auto it = std::find(preference_symbols.begin(), preference_symbols.end(), symbol);
  if (it == preference_symbols.end()) {
    throw PreferenceError("reward model does not score preference '" + std::string(symbol) + "'");
  }
  return static_cast<std::size_t>(it - preference_symbols.begin());
}

std::vector<double> reward_features(const RewardModel& model, const Prompt& prompt,
                                    const Response& response, std::string_view symbol,
                                    const EnvironmentConfig& env) {
  const auto& a = model.architecture;
  const std::size_t slot = model.preference_slot(symbol);
  if (prompt.topic < 0 || prompt.topic >= a.prompt_count) {
    throw ShapeError("prompt topic outside reward model encoding");
  }
  const auto stats = compute_stats(response, prompt, env);
  std::vector<double> x(static_cast<std::size_t>(a.input_width()), 0.0);
  x[static_cast<std::size_t>(prompt.topic)] = 1.0;
  auto* f = &x[static_cast<std::size_t>(a.prompt_count)];
  const double L = env.max_length;
  for (std::size_t c = 0; c < kTextClassCount; ++c) {
    f[c] = stats.class_count[c] / L;
    f[kTextClassCount + c] = stats.class_fraction[c];
  }
  f[2 * kTextClassCount] = stats.length_fraction;
  f[2 * kTextClassCount + 1] = stats.target_count / L;
  if (model.multitask()) {
    x[static_cast<std::size_t>(a.prompt_count + kRewardStatFeatures) + slot] = 1.0;
  }
  return x;
}

double score_features(const RewardArchitecture& arch, const ParameterVector& params,
                      std::span<const double> features) {
  check_reward_compatible(arch, params);
  if (features.size() != static_cast<std::size_t>(arch.input_width())) {
    throw ShapeError("reward features have the wrong width");
  }
  std::vector<double> hidden;
  return forward(arch, params.values, features, hidden);
}

double score(const RewardModel& model, const Prompt& prompt, const Response& response,
             std::string_view symbol, const EnvironmentConfig& env) {
  return score_features(model.architecture, model.params,
                        reward_features(model, prompt, response, symbol, env));
}

LossGradient bt_loss_and_grad(const RewardArchitecture& arch, const ParameterVector& params,
                              std::span<const RewardPair> batch) {
  if (batch.empty()) throw std::invalid_argument("bt_loss_and_grad: empty batch");
  check_reward_compatible(arch, params);
  LossGradient out;
  out.gradient = ParameterVector{std::vector<double>(params.size(), 0.0), params.fingerprint};
  std::vector<double> hw, hl;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& pair : batch) {
    const double sw = forward(arch, params.values, pair.winner, hw);
    const double sl = forward(arch, params.values, pair.loser, hl);
    const double d = sw - sl;
    out.loss += softplus_neg(d) * inv;
    // d/dd of -log sigmoid(d) = -(1 - sigmoid(d))
    const double g = -(1.0 - sigmoid(d)) * inv;
    backward(arch, params.values, pair.winner, hw, g, out.gradient.values);
    backward(arch, params.values, pair.loser, hl, -g, out.gradient.values);
  }
  return out;
}

std::size_t output_bias_index(const RewardArchitecture& arch) { return RewardLayout(arch).b_out; }

nlohmann::json RewardTrainConfig::to_json() const {
  return {{"hidden_width", hidden_width},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"init_scale", init_scale}};
}

RewardTrainConfig RewardTrainConfig::from_json(const nlohmann::json& j) {
  RewardTrainConfig c;
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.init_scale = j.value("init_scale", c.init_scale);
  if (c.hidden_width < 1 || c.batch_size < 1 || !(c.learning_rate > 0.0)) {
    throw std::invalid_argument("reward_model config: width, batch size and rate must be positive");
  }
  return c;
}

RewardTrainResult train_reward_model(std::span<const ComparisonRecord> records,
                                     RewardVariant variant,
                                     std::span<const std::string> symbols,
                                     const RewardTrainConfig& config,
                                     const EnvironmentConfig& env, std::uint64_t seed) {
  if (symbols.empty()) throw std::invalid_argument("train_reward_model: no preference requested");
  if (variant == RewardVariant::kPerPreference && symbols.size() != 1) {
    throw std::invalid_argument("train_reward_model: per-preference variant takes one symbol");
  }
  RewardModel model;
  model.architecture.prompt_count = env.topic_count();
  model.architecture.hidden_width = config.hidden_width;
  model.architecture.preference_count =
      variant == RewardVariant::kMultitask ? static_cast<int>(symbols.size()) : 0;
  model.architecture.validate();
  model.preference_symbols.assign(symbols.begin(), symbols.end());
  model.seed = seed;

  std::vector<const ComparisonRecord*> selected;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (std::find(symbols.begin(), symbols.end(), r.preference) != symbols.end()) {
      selected.push_back(&r);
      ++counts[r.preference];
    }
  }
  for (const auto& s : symbols) {
    if (counts[s] == 0) {
      throw std::invalid_argument("train_reward_model: dataset has no records for '" + s + "'");
    }
  }

  // Uniform(-a, a) init with a = scale / sqrt(fan_in), zero biases.
  const auto& arch = model.architecture;
  model.params = ParameterVector{std::vector<double>(arch.parameter_count(), 0.0),
                                 arch.fingerprint()};
  {
    Rng init(derive_seed(seed, "reward-init"));
    const RewardLayout L(arch);
    const double a_in = config.init_scale / std::sqrt(static_cast<double>(arch.input_width()));
    const double a_out = config.init_scale / std::sqrt(static_cast<double>(arch.hidden_width));
    for (std::size_t i = L.w_in; i < L.b_in; ++i) model.params.values[i] = (2 * init.uniform() - 1) * a_in;
    for (std::size_t i = L.w_out; i < L.b_out; ++i) model.params.values[i] = (2 * init.uniform() - 1) * a_out;
  }

  // Fisher-Yates shuffle with the portable generator.
  std::vector<std::size_t> order(selected.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle(derive_seed(seed, "reward-shuffle"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  RewardTrainResult result;
  std::vector<RewardPair> batch;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    batch.clear();
    for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) {
      const auto& r = *selected[order[k]];
      const Prompt prompt = make_prompt(r.prompt_id, env);
      batch.push_back({reward_features(model, prompt, r.winner(), r.preference, env),
                       reward_features(model, prompt, r.loser(), r.preference, env)});
    }
    auto lg = bt_loss_and_grad(arch, model.params, batch);
    loss_sum += lg.loss;
    ++batches;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      model.params.values[i] -= config.learning_rate * lg.gradient.values[i];
    }
  }
  if (!model.params.all_finite()) throw std::runtime_error("reward model training diverged");
  model.params = model.params.quantized();
  model.provenance = {{"variant", variant == RewardVariant::kMultitask ? "multitask" : "per_preference"},
                      {"preferences", model.preference_symbols},
                      {"pairs", selected.size()},
                      {"epochs", 1},
                      {"train", config.to_json()}};
  result.model = std::move(model);
  result.mean_epoch_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  result.pairs = selected.size();
  return result;
}

double oracle_agreement(const RewardModel& model, std::span<const ComparisonRecord> records,
                        const PreferenceSpace& space, const EnvironmentConfig& env,
                        std::string_view symbol) {
  std::size_t agree = 0, total = 0;
  for (const auto& r : records) {
    if (r.preference != symbol) continue;
    const Prompt prompt = make_prompt(r.prompt_id, env);
    const Verdict v = symbol == kGeneralSymbol
                          ? helpfulness_judge(r.a, r.b, prompt, env)
                          : oracle_judge(space.find(symbol), r.a, r.b, prompt, env);
    if (v == Verdict::kTie) continue;
    const double d = score(model, prompt, r.a, symbol, env) - score(model, prompt, r.b, symbol, env);
    ++total;
    if ((d > 0) == (v == Verdict::kWin) && d != 0.0) ++agree;
  }
  return total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
}

CheckpointFile to_checkpoint_file(const RewardModel& model) {
  check_reward_compatible(model.architecture, model.params);
  CheckpointFile f;
  f.header = {{"format_version", kCheckpointFormatVersion},
              {"model_kind", "reward_model"},
              {"architecture", model.architecture.to_json()},
              {"fingerprint", fingerprint_hex(model.params.fingerprint)},
              {"param_count", model.params.size()},
              {"preference_symbols", model.preference_symbols},
              {"seed", model.seed},
              {"config_hash", model.config_hash},
              {"provenance", model.provenance}};
  f.values = model.params.values;
  return f;
}

RewardModel reward_model_from_checkpoint_file(const CheckpointFile& file,
                                              const std::string& origin) {
  if (file.header.value("model_kind", "") != "reward_model") {
    throw CheckpointError(origin + ": not a reward model checkpoint");
  }
  RewardModel m;
  m.architecture = RewardArchitecture::from_json(file.header.at("architecture"));
  if (file.header.value("fingerprint", "") != fingerprint_hex(m.architecture.fingerprint())) {
    throw CheckpointError(origin + ": fingerprint does not match the stored architecture");
  }
  m.params = ParameterVector{file.values, m.architecture.fingerprint()};
  if (m.params.size() != m.architecture.parameter_count()) {
    throw CheckpointError(origin + ": parameter count does not match the architecture");
  }
  m.preference_symbols = file.header.at("preference_symbols").get<std::vector<std::string>>();
  m.seed = file.header.value("seed", std::uint64_t{0});
  m.config_hash = file.header.value("config_hash", "");
  m.provenance = file.header.value("provenance", nlohmann::json::object());
  return m;
}

void save_reward_model(const std::filesystem::path& path, const RewardModel& model) {
  write_checkpoint_file(path, to_checkpoint_file(model));
}

RewardModel load_reward_model(const std::filesystem::path& path) {
  return reward_model_from_checkpoint_file(read_checkpoint_file(path), path.string());
}

}  // namespace rlphf
