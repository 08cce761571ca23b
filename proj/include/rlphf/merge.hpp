// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlphf/checkpoint.hpp"
#include "rlphf/policy.hpp"
#include "rlphf/preference_space.hpp"

namespace rlphf {

class MergeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MergeMode { kFull, kDelta };

std::string_view to_string(MergeMode mode);

/// Inputs are borrowed; they must outlive the call.
struct MergeSpec {
  std::vector<const ParameterVector*> inputs;
  std::vector<double> weights;
  MergeMode mode = MergeMode::kFull;
  /// Required in DELTA mode.
  const ParameterVector* reference = nullptr;
};

/// FULL: sum_i w_i * x_i. DELTA: ref + sum_i w_i * (x_i - ref). Each
/// coordinate's terms are summed in sorted order, so permuting the
/// (input, weight) pairs gives bit-identical output.
/// Throws MergeError on fingerprint or size mismatch, negative weights, a
/// weight count that differs from the input count, or sum(w) != 1 +- 1e-9.
ParameterVector merge(const MergeSpec& spec);

/// Coordinate-wise mean (sum, then divide by k). Throws MergeError on empty
/// input.
ParameterVector uniform_soup(std::span<const ParameterVector> checkpoints);

/// Uniform soup of the combination's experts with the combination mask as
/// inference mask. `experts` maps preference symbol to checkpoint; all must
/// share the architecture and the space's mask layout. Throws MergeError
/// naming the first missing symbol.
PolicyCheckpoint soup_for_combination(const PreferenceCombination& combo,
                                      const PreferenceSpace& space,
                                      const std::map<std::string, PolicyCheckpoint>& experts);

}  // namespace rlphf
