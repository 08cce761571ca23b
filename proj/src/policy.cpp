// SPDX-License-Identifier: Apache-2.0
#include "rlphf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rlphf/rng.hpp"

namespace rlphf {

bool ParameterVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ParameterVector ParameterVector::quantized() const {
  ParameterVector out = *this;
  for (auto& v : out.values) v = static_cast<double>(static_cast<float>(v));
  return out;
}

std::size_t PolicyArchitecture::parameter_count() const { return PolicyLayout(*this).total; }

std::uint64_t PolicyArchitecture::fingerprint() const {
  std::string key = "policy/v" + std::to_string(kPolicyLayoutVersion);
  for (int v : {vocab_size, prompt_count, mask_length, hidden_width, embed_dim, max_length,
                static_cast<int>(eos_token)}) {
    key += "/" + std::to_string(v);
  }
  return fnv1a64(key);
}

void PolicyArchitecture::validate() const {
  if (vocab_size < 2 || prompt_count < 1 || mask_length < 0 || hidden_width < 1 ||
      embed_dim < 1 || max_length < 1) {
    throw ShapeError("policy architecture: sizes must be positive");
  }
  if (eos_token < 0 || eos_token >= vocab_size) {
    throw ShapeError("policy architecture: eos token outside vocabulary");
  }
}

nlohmann::json PolicyArchitecture::to_json() const {
  return {{"vocab_size", vocab_size},     {"prompt_count", prompt_count},
          {"mask_length", mask_length},   {"hidden_width", hidden_width},
          {"embed_dim", embed_dim},       {"max_length", max_length},
          {"eos_token", eos_token},       {"layout_version", kPolicyLayoutVersion}};
}

PolicyArchitecture PolicyArchitecture::from_json(const nlohmann::json& j) {
  if (j.value("layout_version", 0) != kPolicyLayoutVersion) {
    throw ShapeError("policy architecture: unsupported layout version " +
                     std::to_string(j.value("layout_version", 0)));
  }
  PolicyArchitecture a;
  a.vocab_size = j.at("vocab_size").get<int>();
  a.prompt_count = j.at("prompt_count").get<int>();
  a.mask_length = j.at("mask_length").get<int>();
  a.hidden_width = j.at("hidden_width").get<int>();
  a.embed_dim = j.at("embed_dim").get<int>();
  a.max_length = j.at("max_length").get<int>();
  a.eos_token = j.at("eos_token").get<TokenId>();
  a.validate();
  return a;
}

PolicyLayout::PolicyLayout(const PolicyArchitecture& a) {
  const auto V = static_cast<std::size_t>(a.vocab_size);
  const auto E = static_cast<std::size_t>(a.embed_dim);
  const auto H = static_cast<std::size_t>(a.hidden_width);
  const auto D = static_cast<std::size_t>(a.input_width());
  embedding = 0;
  w_in = embedding + (V + 1) * E;
  b_in = w_in + H * D;
  w_out = b_in + H;
  b_out = w_out + V * H;
  total = b_out + V;
}

PolicyArchitecture make_policy_architecture(const EnvironmentConfig& env,
                                            const PreferenceSpace& space, int hidden_width,
                                            int embed_dim) {
  PolicyArchitecture a;
  a.vocab_size = env.vocab.size();
  a.prompt_count = env.topic_count();
  a.mask_length = static_cast<int>(space.n_total_preferences());
  a.hidden_width = hidden_width;
  a.embed_dim = embed_dim;
  a.max_length = env.max_length;
  a.eos_token = env.vocab.eos();
  a.validate();
  return a;
}

ParameterVector zero_policy(const PolicyArchitecture& arch) {
  arch.validate();
  return ParameterVector{std::vector<double>(arch.parameter_count(), 0.0), arch.fingerprint()};
}

ParameterVector init_policy(const PolicyArchitecture& arch, std::uint64_t seed, double scale) {
  auto params = zero_policy(arch);
  const PolicyLayout L(arch);
  Rng rng(seed);
  auto fill = [&](std::size_t begin, std::size_t end, double fan_in) {
    const double a = scale / std::sqrt(fan_in);
    for (std::size_t i = begin; i < end; ++i) params.values[i] = (2.0 * rng.uniform() - 1.0) * a;
  };
  fill(L.embedding, L.w_in, 1.0);
  fill(L.w_in, L.b_in, arch.input_width());
  fill(L.w_out, L.b_out, arch.hidden_width);
  return params;
}

void check_compatible(const PolicyArchitecture& arch, const ParameterVector& params) {
  if (params.fingerprint != arch.fingerprint()) {
    throw ShapeError("policy parameters: fingerprint mismatch with architecture");
  }
  if (params.values.size() != arch.parameter_count()) {
    throw ShapeError("policy parameters: expected " + std::to_string(arch.parameter_count()) +
                     " values, got " + std::to_string(params.values.size()));
  }
}

namespace {

/// Per-step activations kept for the backward pass.
struct StepCache {
  std::vector<double> hidden;  // tanh outputs
  std::vector<double> logits;
};

class Network {
 public:
  Network(const PolicyArchitecture& arch, const ParameterVector& params)
      : a_(arch), L_(arch), p_(params.values) {
    check_compatible(arch, params);
  }

  void check_mask(std::span<const std::uint8_t> mask) const {
    if (mask.size() != static_cast<std::size_t>(a_.mask_length)) {
      throw ShapeError("mask length " + std::to_string(mask.size()) + " != architecture's " +
                       std::to_string(a_.mask_length));
    }
  }

  void check_topic(int topic) const {
    if (topic < 0 || topic >= a_.prompt_count) {
      throw ShapeError("prompt topic " + std::to_string(topic) + " outside [0, " +
                       std::to_string(a_.prompt_count) + ")");
    }
  }

  void forward(int topic, int prev, double pos, std::span<const std::uint8_t> mask,
               StepCache& c) const {
    const auto H = static_cast<std::size_t>(a_.hidden_width);
    const auto V = static_cast<std::size_t>(a_.vocab_size);
    const auto E = static_cast<std::size_t>(a_.embed_dim);
    const auto D = static_cast<std::size_t>(a_.input_width());
    const auto P = static_cast<std::size_t>(a_.prompt_count);
    const double* emb = &p_[L_.embedding + static_cast<std::size_t>(prev) * E];
    c.hidden.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
      const double* row = &p_[L_.w_in + h * D];
      double z = p_[L_.b_in + h] + row[static_cast<std::size_t>(topic)];
      for (std::size_t e = 0; e < E; ++e) z += row[P + e] * emb[e];
      z += row[P + E] * pos;
      for (std::size_t m = 0; m < mask.size(); ++m) {
        if (mask[m]) z += row[P + E + 1 + m];
      }
      c.hidden[h] = std::tanh(z);
    }
    c.logits.resize(V);
    for (std::size_t v = 0; v < V; ++v) {
      const double* row = &p_[L_.w_out + v * H];
      double s = p_[L_.b_out + v];
      for (std::size_t h = 0; h < H; ++h) s += row[h] * c.hidden[h];
      c.logits[v] = s;
    }
  }

  /// Accumulates weight * d(log p[target]) into grad given d/dlogits.
  void backward(int topic, int prev, double pos, std::span<const std::uint8_t> mask,
                const StepCache& c, std::span<const double> dlogits, std::span<double> grad,
                std::vector<double>& dz) const {
    const auto H = static_cast<std::size_t>(a_.hidden_width);
    const auto V = static_cast<std::size_t>(a_.vocab_size);
    const auto E = static_cast<std::size_t>(a_.embed_dim);
    const auto D = static_cast<std::size_t>(a_.input_width());
    const auto P = static_cast<std::size_t>(a_.prompt_count);
    dz.assign(H, 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double g = dlogits[v];
      if (g == 0.0) continue;
      grad[L_.b_out + v] += g;
      const double* row = &p_[L_.w_out + v * H];
      double* grow = &grad[L_.w_out + v * H];
      for (std::size_t h = 0; h < H; ++h) {
        grow[h] += g * c.hidden[h];
        dz[h] += g * row[h];
      }
    }
    const std::size_t emb_off = L_.embedding + static_cast<std::size_t>(prev) * E;
    for (std::size_t h = 0; h < H; ++h) {
      const double g = dz[h] * (1.0 - c.hidden[h] * c.hidden[h]);
      if (g == 0.0) continue;
      grad[L_.b_in + h] += g;
      const double* row = &p_[L_.w_in + h * D];
      double* grow = &grad[L_.w_in + h * D];
      grow[static_cast<std::size_t>(topic)] += g;
      for (std::size_t e = 0; e < E; ++e) {
        grow[P + e] += g * p_[emb_off + e];
        grad[emb_off + e] += g * row[P + e];
      }
      grow[P + E] += g * pos;
      for (std::size_t m = 0; m < mask.size(); ++m) {
        if (mask[m]) grow[P + E + 1 + m] += g;
      }
    }
  }

  const PolicyArchitecture& arch() const { return a_; }

 private:
  const PolicyArchitecture& a_;
  PolicyLayout L_;
  const std::vector<double>& p_;
};

double relative_position(std::size_t t, const PolicyArchitecture& a) {
  return static_cast<double>(t) / a.max_length;
}

/// log softmax(logits / T)[target] and, optionally, d/dlogits of it.
double log_softmax_at(std::span<const double> logits, double temperature, std::size_t target,
                      std::vector<double>* dlogits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp((l - mx) / temperature);
  const double lse = std::log(sum);
  if (dlogits) {
    dlogits->resize(logits.size());
    for (std::size_t v = 0; v < logits.size(); ++v) {
      const double p = std::exp((logits[v] - mx) / temperature - lse);
      (*dlogits)[v] = ((v == target ? 1.0 : 0.0) - p) / temperature;
    }
  }
  return (logits[target] - mx) / temperature - lse;
}

Response decode(const Network& net, const Prompt& prompt, std::span<const std::uint8_t> mask,
                Rng* rng, double temperature) {
  const auto& a = net.arch();
  net.check_mask(mask);
  net.check_topic(prompt.topic);
  Response r;
  StepCache c;
  int prev = a.bos_index();
  for (int t = 0; t < a.max_length; ++t) {
    net.forward(prompt.topic, prev, relative_position(static_cast<std::size_t>(t), a), mask, c);
    std::size_t tok = 0;
    if (rng == nullptr) {
      tok = static_cast<std::size_t>(std::max_element(c.logits.begin(), c.logits.end()) -
                                     c.logits.begin());
    } else {
      const auto probs = softmax(c.logits, temperature);
      const double u = rng->uniform();
      double acc = 0.0;
      tok = probs.size() - 1;
      for (std::size_t v = 0; v < probs.size(); ++v) {
        acc += probs[v];
        if (u < acc) {
          tok = v;
          break;
        }
      }
    }
    r.tokens.push_back(static_cast<TokenId>(tok));
    if (static_cast<TokenId>(tok) == a.eos_token) break;
    prev = static_cast<int>(tok);
  }
  return r;
}

void check_response(const Response& response, const PolicyArchitecture& a) {
  if (response.tokens.size() > static_cast<std::size_t>(a.max_length)) {
    throw ShapeError("response longer than max length");
  }
  for (TokenId t : response.tokens) {
    if (t < 0 || t >= a.vocab_size) {
      throw ShapeError("response token " + std::to_string(t) + " outside vocabulary");
    }
  }
}

}  // namespace

std::vector<double> policy_logits(const PolicyArchitecture& arch, const ParameterVector& params,
                                  const PolicyInput& input) {
  Network net(arch, params);
  net.check_mask(input.mask);
  net.check_topic(input.topic);
  if (input.previous_token < 0 || input.previous_token > arch.bos_index()) {
    throw ShapeError("previous token index out of range");
  }
  StepCache c;
  net.forward(input.topic, input.previous_token, input.relative_position, input.mask, c);
  return c.logits;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

Response sample_response(const PolicyArchitecture& arch, const ParameterVector& params,
                         const Prompt& prompt, std::span<const std::uint8_t> mask,
                         std::uint64_t seed, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
  Network net(arch, params);
  Rng rng(seed);
  return decode(net, prompt, mask, &rng, temperature);
}

Response greedy_response(const PolicyArchitecture& arch, const ParameterVector& params,
                         const Prompt& prompt, std::span<const std::uint8_t> mask) {
  Network net(arch, params);
  return decode(net, prompt, mask, nullptr, 1.0);
}

double accumulate_logprob_grad(const PolicyArchitecture& arch, const ParameterVector& params,
                               const Prompt& prompt, std::span<const std::uint8_t> mask,
                               const Response& response, double temperature, double weight,
                               std::span<double> gradient) {
  Network net(arch, params);
  net.check_mask(mask);
  net.check_topic(prompt.topic);
  check_response(response, arch);
  if (!gradient.empty() && gradient.size() != params.values.size()) {
    throw ShapeError("gradient buffer size mismatch");
  }
  const auto tokens = response.scored_prefix(arch.eos_token);
  StepCache c;
  std::vector<double> dlogits;
  std::vector<double> dz;
  double logprob = 0.0;
  int prev = arch.bos_index();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double pos = relative_position(t, arch);
    net.forward(prompt.topic, prev, pos, mask, c);
    const bool want_grad = !gradient.empty() && weight != 0.0;
    logprob += log_softmax_at(c.logits, temperature, static_cast<std::size_t>(tokens[t]),
                              want_grad ? &dlogits : nullptr);
    if (want_grad) {
      for (auto& g : dlogits) g *= weight;
      net.backward(prompt.topic, prev, pos, mask, c, dlogits, gradient, dz);
    }
    prev = tokens[t];
  }
  return logprob;
}

double sequence_logprob(const PolicyArchitecture& arch, const ParameterVector& params,
                        const Prompt& prompt, std::span<const std::uint8_t> mask,
                        const Response& response, double temperature) {
  return accumulate_logprob_grad(arch, params, prompt, mask, response, temperature, 0.0, {});
}

LogprobGradient sequence_logprob_and_grad(const PolicyArchitecture& arch,
                                          const ParameterVector& params, const Prompt& prompt,
                                          std::span<const std::uint8_t> mask,
                                          const Response& response, double temperature) {
  LogprobGradient out;
  out.gradient = ParameterVector{std::vector<double>(params.values.size(), 0.0),
                                 params.fingerprint};
  out.logprob = accumulate_logprob_grad(arch, params, prompt, mask, response, temperature, 1.0,
                                        out.gradient.values);
  return out;
}

double kl_estimate(const PolicyArchitecture& arch, const ParameterVector& params,
                   const ParameterVector& ref_params, const Prompt& prompt,
                   std::span<const std::uint8_t> mask, std::span<const Response> responses) {
  if (responses.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : responses) {
    total += sequence_logprob(arch, params, prompt, mask, r) -
             sequence_logprob(arch, ref_params, prompt, mask, r);
  }
  return total / static_cast<double>(responses.size());
}

}  // namespace rlphf
