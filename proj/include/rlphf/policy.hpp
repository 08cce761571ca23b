// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlphf/env.hpp"
#include "rlphf/preference_space.hpp"

namespace rlphf {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat parameter array tagged with the fingerprint of the architecture that
/// gives it meaning. Merging and persistence operate on this type directly.
struct ParameterVector {
  std::vector<double> values;
  std::uint64_t fingerprint = 0;

  std::size_t size() const { return values.size(); }
  bool all_finite() const;
  /// Copy with every value rounded to float32, the precision checkpoints store.
  ParameterVector quantized() const;

  bool operator==(const ParameterVector&) const = default;
};

inline constexpr int kPolicyLayoutVersion = 1;

/// One-hidden-layer tanh network over
///   [topic one-hot | previous-token embedding | position / L | preference mask]
/// producing next-token logits.
///
/// Flat layout, version 1 (row-major blocks in this order):
///   embedding  (vocab_size + 1) x embed_dim   row vocab_size is the BOS row
///   w_in       hidden_width x input_width()
///   b_in       hidden_width
///   w_out      vocab_size x hidden_width
///   b_out      vocab_size
/// Input columns of w_in: topic [0, P), embedding [P, P+E), position P+E,
/// mask [P+E+1, P+E+1+M).
struct PolicyArchitecture {
  int vocab_size = 32;
  int prompt_count = 11;
  int mask_length = 6;
  int hidden_width = 64;
  int embed_dim = 16;
  int max_length = 24;
  TokenId eos_token = 31;

  int input_width() const { return prompt_count + embed_dim + 1 + mask_length; }
  int bos_index() const { return vocab_size; }
  std::size_t parameter_count() const;
  /// FNV-1a over the layout version and every field.
  std::uint64_t fingerprint() const;
  /// Throws ShapeError if any field is non-positive or eos is out of range.
  void validate() const;

  nlohmann::json to_json() const;
  static PolicyArchitecture from_json(const nlohmann::json& j);

  bool operator==(const PolicyArchitecture&) const = default;
};

struct PolicyLayout {
  std::size_t embedding, w_in, b_in, w_out, b_out, total;
  explicit PolicyLayout(const PolicyArchitecture& arch);
};

/// Architecture matching an environment and preference space.
PolicyArchitecture make_policy_architecture(const EnvironmentConfig& env,
                                            const PreferenceSpace& space, int hidden_width = 64,
                                            int embed_dim = 16);

struct PolicyInput {
  int topic = 0;
  /// Token id, or arch.bos_index() at the first position.
  int previous_token = 0;
  double relative_position = 0.0;
  std::span<const std::uint8_t> mask;
};

ParameterVector zero_policy(const PolicyArchitecture& arch);
/// Uniform(-a, a) weights with a = scale / sqrt(fan_in); biases zero.
ParameterVector init_policy(const PolicyArchitecture& arch, std::uint64_t seed,
                            double scale = 1.0);

/// Throws ShapeError on fingerprint or size mismatch.
void check_compatible(const PolicyArchitecture& arch, const ParameterVector& params);

std::vector<double> policy_logits(const PolicyArchitecture& arch, const ParameterVector& params,
                                  const PolicyInput& input);

/// Numerically stable softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Autoregressive sampling until EOS or max_length, reproducible from `seed`.
Response sample_response(const PolicyArchitecture& arch, const ParameterVector& params,
                         const Prompt& prompt, std::span<const std::uint8_t> mask,
                         std::uint64_t seed, double temperature);

/// Argmax decoding; the zero-temperature limit of sample_response.
Response greedy_response(const PolicyArchitecture& arch, const ParameterVector& params,
                         const Prompt& prompt, std::span<const std::uint8_t> mask);

/// Sum over the scored prefix of log softmax(logits / temperature)[token].
double sequence_logprob(const PolicyArchitecture& arch, const ParameterVector& params,
                        const Prompt& prompt, std::span<const std::uint8_t> mask,
                        const Response& response, double temperature = 1.0);

struct LogprobGradient {
  double logprob = 0.0;
  ParameterVector gradient;
};

LogprobGradient sequence_logprob_and_grad(const PolicyArchitecture& arch,
                                          const ParameterVector& params, const Prompt& prompt,
                                          std::span<const std::uint8_t> mask,
                                          const Response& response, double temperature = 1.0);

/// Adds weight * d logprob / d params into `gradient` and returns the logprob.
double accumulate_logprob_grad(const PolicyArchitecture& arch, const ParameterVector& params,
                               const Prompt& prompt, std::span<const std::uint8_t> mask,
                               const Response& response, double temperature, double weight,
                               std::span<double> gradient);

/// Monte-Carlo KL(params || ref): mean over responses (sampled from `params`)
/// of the summed per-token log-ratio.
double kl_estimate(const PolicyArchitecture& arch, const ParameterVector& params,
                   const ParameterVector& ref_params, const Prompt& prompt,
                   std::span<const std::uint8_t> mask, std::span<const Response> responses);

}  // namespace rlphf
