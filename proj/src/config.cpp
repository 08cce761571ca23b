// SPDX-License-Identifier: Apache-2.0
#include "rlphf/config.hpp"

#include <set>

#include "rlphf/checkpoint.hpp"
#include "rlphf/rng.hpp"

namespace rlphf {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

nlohmann::json DemonstratorConfig::to_json() const {
  return {{"exhibit_probability", exhibit_probability},
          {"target_probability", target_probability},
          {"simple_probability", simple_probability},
          {"technical_probability", technical_probability},
          {"style_probability", style_probability},
          {"min_length", min_length},
          {"max_length", max_length},
          {"concise_min", concise_min},
          {"concise_max", concise_max},
          {"verbose_min", verbose_min},
          {"verbose_max", verbose_max},
          {"mask_dimension_probability", mask_dimension_probability}};
}

DemonstratorConfig DemonstratorConfig::from_json(const nlohmann::json& j) {
  DemonstratorConfig c;
  c.exhibit_probability = j.value("exhibit_probability", c.exhibit_probability);
  c.target_probability = j.value("target_probability", c.target_probability);
  c.simple_probability = j.value("simple_probability", c.simple_probability);
  c.technical_probability = j.value("technical_probability", c.technical_probability);
  c.style_probability = j.value("style_probability", c.style_probability);
  c.min_length = j.value("min_length", c.min_length);
  c.max_length = j.value("max_length", c.max_length);
  c.concise_min = j.value("concise_min", c.concise_min);
  c.concise_max = j.value("concise_max", c.concise_max);
  c.verbose_min = j.value("verbose_min", c.verbose_min);
  c.verbose_max = j.value("verbose_max", c.verbose_max);
  c.mask_dimension_probability = j.value("mask_dimension_probability", c.mask_dimension_probability);
  require(is_probability(c.exhibit_probability), "demonstrator.exhibit_probability");
  require(is_probability(c.mask_dimension_probability), "demonstrator.mask_dimension_probability");
  require(c.target_probability >= 0 && c.simple_probability >= 0 && c.technical_probability >= 0 &&
              c.style_probability >= 0,
          "demonstrator class probabilities must be >= 0");
  require(c.target_probability + c.simple_probability + c.technical_probability +
                  4 * c.style_probability <= 1.0 + 1e-12,
          "demonstrator class probabilities exceed 1");
  require(1 <= c.min_length && c.min_length <= c.max_length, "demonstrator length range");
  require(1 <= c.concise_min && c.concise_min <= c.concise_max, "demonstrator concise range");
  require(1 <= c.verbose_min && c.verbose_min <= c.verbose_max, "demonstrator verbose range");
  return c;
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"demonstrator", demonstrator.to_json()},
          {"steps", steps},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"hidden_width", hidden_width},
          {"embed_dim", embed_dim},
          {"init_scale", init_scale}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.demonstrator = DemonstratorConfig::from_json(j.value("demonstrator", nlohmann::json::object()));
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.init_scale = j.value("init_scale", c.init_scale);
  require(c.steps >= 0 && c.batch_size >= 1, "pretrain.steps / pretrain.batch_size");
  require(c.learning_rate > 0.0 && c.init_scale >= 0.0, "pretrain.learning_rate / init_scale");
  require(c.hidden_width >= 1 && c.embed_dim >= 1, "pretrain.hidden_width / embed_dim");
  return c;
}

nlohmann::json FeedbackConfig::to_json() const {
  return {{"prompt_draws", prompt_draws},
          {"general_prompt_draws", general_prompt_draws},
          {"rollout_temperature", rollout_temperature}};
}

FeedbackConfig FeedbackConfig::from_json(const nlohmann::json& j) {
  FeedbackConfig c;
  c.prompt_draws = j.value("prompt_draws", c.prompt_draws);
  c.general_prompt_draws = j.value("general_prompt_draws", c.general_prompt_draws);
  c.rollout_temperature = j.value("rollout_temperature", c.rollout_temperature);
  require(c.prompt_draws >= 1 && c.general_prompt_draws >= 1, "feedback prompt draws");
  require(c.rollout_temperature > 0.0, "feedback.rollout_temperature");
  return c;
}

nlohmann::json MtConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate}};
}

MtConfig MtConfig::from_json(const nlohmann::json& j) {
  MtConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  require(c.epochs >= 0 && c.batch_size >= 1 && c.learning_rate > 0.0, "mt settings");
  return c;
}

nlohmann::json EvalConfig::to_json() const { return {{"temperature", temperature}}; }

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.temperature = j.value("temperature", c.temperature);
  require(c.temperature > 0.0, "eval.temperature");
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"experiment", experiment},
          {"seed", seed},
          {"output_dir", output_dir},
          {"environment", env.to_json()},
          {"preferences", space.to_json()},
          {"extended_preferences", extended_space.to_json()},
          {"pretrain", pretrain.to_json()},
          {"feedback", feedback.to_json()},
          {"reward_model", reward_model.to_json()},
          {"ppo", ppo.to_json()},
          {"pmorl", pmorl.to_json()},
          {"rlhf", rlhf.to_json()},
          {"mt", mt.to_json()},
          {"eval", eval.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "experiment", "seed",     "output_dir", "environment", "preferences",
      "extended_preferences",   "pretrain",   "feedback",    "reward_model",
      "ppo",        "pmorl",    "rlhf",       "mt",          "eval"};
  require(j.is_object(), "top level must be an object");
  for (const auto& [key, _] : j.items()) {
    require(known.count(key) > 0, "unknown key '" + key + "'");
  }
  const auto section = [&j](const char* key) {
    return j.contains(key) ? j.at(key) : nlohmann::json::object();
  };
  RunConfig c;
  const RunConfig defaults;
  try {
    c.experiment = j.value("experiment", c.experiment);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.env = EnvironmentConfig::from_json(section("environment"));
    if (j.contains("preferences")) c.space = PreferenceSpace::from_json(j.at("preferences"));
    if (j.contains("extended_preferences")) {
      c.extended_space = PreferenceSpace::from_json(j.at("extended_preferences"));
    }
    c.pretrain = PretrainConfig::from_json(section("pretrain"));
    c.feedback = FeedbackConfig::from_json(section("feedback"));
    c.reward_model = RewardTrainConfig::from_json(section("reward_model"));
    c.ppo = PPOConfig::from_json(section("ppo"), defaults.ppo);
    c.pmorl = PPOConfig::from_json(section("pmorl"), defaults.pmorl);
    c.rlhf = PPOConfig::from_json(section("rlhf"), defaults.rlhf);
    c.mt = MtConfig::from_json(section("mt"));
    c.eval = EvalConfig::from_json(section("eval"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  for (const auto& sym : c.space.symbols()) {
    require(c.extended_space.contains(sym),
            "extended_preferences is missing preference " + sym);
  }
  return c;
}

std::string RunConfig::hash() const {
  auto j = to_json();
  j.erase("seed");
  j.erase("output_dir");
  return fingerprint_hex(fnv1a64(j.dump()));
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("missing config: ") + e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config '" + path.string() + "': " + e.what());
  }
  try {
    return RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace rlphf
