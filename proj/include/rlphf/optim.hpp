// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace rlphf {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

/// One Adam step moving `params` along +`direction` (ascent). Callers
/// minimizing a loss pass its negated gradient.
inline void adam_ascend(std::span<double> params, std::span<const double> direction,
                        AdamState& state, double learning_rate, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = direction[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    params[i] += learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
  }
}

}  // namespace rlphf
