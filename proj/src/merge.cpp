// SPDX-License-Identifier: Apache-2.0
#include "rlphf/merge.hpp"

#include <algorithm>
#include <cmath>

namespace rlphf {

namespace {

void check_same_shape(const ParameterVector& a, const ParameterVector& b, const char* what) {
  if (a.fingerprint != b.fingerprint) {
    throw MergeError(std::string("merge: ") + what + " fingerprint " +
                     fingerprint_hex(b.fingerprint) + " differs from " +
                     fingerprint_hex(a.fingerprint));
  }
  if (a.size() != b.size()) {
    throw MergeError(std::string("merge: ") + what + " has " + std::to_string(b.size()) +
                     " values, expected " + std::to_string(a.size()));
  }
}

double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

std::string_view to_string(MergeMode mode) {
  return mode == MergeMode::kFull ? "FULL" : "DELTA";
}

ParameterVector merge(const MergeSpec& spec) {
  if (spec.inputs.empty()) throw MergeError("merge: no inputs");
  if (spec.weights.size() != spec.inputs.size()) {
    throw MergeError("merge: " + std::to_string(spec.weights.size()) + " weights for " +
                     std::to_string(spec.inputs.size()) + " inputs");
  }
  double total = 0.0;
  for (double w : spec.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw MergeError("merge: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw MergeError("merge: weights sum to " + std::to_string(total) + ", expected 1");
  }
  const ParameterVector& first = *spec.inputs.front();
  for (const auto* p : spec.inputs) check_same_shape(first, *p, "input");
  const bool delta = spec.mode == MergeMode::kDelta;
  if (delta) {
    if (spec.reference == nullptr) throw MergeError("merge: DELTA mode needs a reference");
    check_same_shape(first, *spec.reference, "reference");
  }

  ParameterVector out{std::vector<double>(first.size()), first.fingerprint};
  std::vector<double> terms(spec.inputs.size());
  for (std::size_t j = 0; j < first.size(); ++j) {
    const double ref = delta ? spec.reference->values[j] : 0.0;
    for (std::size_t i = 0; i < spec.inputs.size(); ++i) {
      terms[i] = spec.weights[i] * (delta ? spec.inputs[i]->values[j] - ref
                                          : spec.inputs[i]->values[j]);
    }
    out.values[j] = delta ? ref + sorted_sum(terms) : sorted_sum(terms);
  }
  return out;
}

ParameterVector uniform_soup(std::span<const ParameterVector> checkpoints) {
  if (checkpoints.empty()) throw MergeError("uniform_soup: no checkpoints");
  const ParameterVector& first = checkpoints.front();
  for (const auto& p : checkpoints) check_same_shape(first, p, "input");
  ParameterVector out{std::vector<double>(first.size()), first.fingerprint};
  const auto k = static_cast<double>(checkpoints.size());
  std::vector<double> terms(checkpoints.size());
  for (std::size_t j = 0; j < first.size(); ++j) {
    for (std::size_t i = 0; i < checkpoints.size(); ++i) terms[i] = checkpoints[i].values[j];
    out.values[j] = sorted_sum(terms) / k;
  }
  return out;
}

PolicyCheckpoint soup_for_combination(const PreferenceCombination& combo,
                                      const PreferenceSpace& space,
                                      const std::map<std::string, PolicyCheckpoint>& experts) {
  const auto mask = combination_mask(combo, space);
  const auto symbols = space.symbols();
  std::vector<ParameterVector> params;
  const PolicyCheckpoint* first = nullptr;
  for (const auto& sym : combo.chosen) {
    const auto it = experts.find(sym);
    if (it == experts.end()) throw MergeError("soup_for_combination: no expert for " + sym);
    const PolicyCheckpoint& e = it->second;
    if (e.mask_symbols != symbols) {
      throw MergeError("soup_for_combination: expert " + sym +
                       " uses a different mask layout than the preference space");
    }
    if (first != nullptr && !(e.architecture == first->architecture)) {
      throw MergeError("soup_for_combination: expert " + sym + " has a different architecture");
    }
    if (first == nullptr) first = &e;
    params.push_back(e.params);
  }
  PolicyCheckpoint out;
  out.architecture = first->architecture;
  out.params = uniform_soup(params);
  out.mask_symbols = symbols;
  out.inference_mask = mask;
  out.seed = first->seed;
  out.config_hash = first->config_hash;
  const double w = 1.0 / static_cast<double>(combo.chosen.size());
  out.provenance = {{"method", "PSOUPS"},
                    {"combination", combo.code},
                    {"constituents", combo.chosen},
                    {"weights", std::vector<double>(combo.chosen.size(), w)},
                    {"mode", to_string(MergeMode::kFull)},
                    {"inference_mask", mask}};
  return out;
}

}  // namespace rlphf
