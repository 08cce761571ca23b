// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>

#include "rlphf/checkpoint.hpp"
#include "rlphf/env.hpp"

namespace rlphf {

enum class MethodId { kVB, kRlhfGeneral, kPP, kMT, kPMORL, kPSoups };

/// Table order: VB, RLHF_GENERAL, PP, MT, PMORL, PSOUPS.
inline constexpr std::array<MethodId, 6> kAllMethods = {
    MethodId::kVB, MethodId::kRlhfGeneral, MethodId::kPP,
    MethodId::kMT, MethodId::kPMORL,       MethodId::kPSoups};

std::string_view to_string(MethodId method);
/// Throws std::invalid_argument on an unknown name.
MethodId method_from_string(std::string_view name);
/// VB and RLHF_GENERAL answer with the zero mask; the others with the
/// combination mask.
bool uses_combination_mask(MethodId method);

/// A checkpoint plus the mask it is queried with.
struct Responder {
  MethodId method = MethodId::kVB;
  std::shared_ptr<const PolicyCheckpoint> policy;
  PreferenceMask mask;

  Response respond(const Prompt& prompt, std::uint64_t seed, double temperature) const;
};

}  // namespace rlphf
