// SPDX-License-Identifier: Apache-2.0
#include "rlphf/responder.hpp"

#include <stdexcept>
#include <string>

namespace rlphf {

std::string_view to_string(MethodId method) {
  switch (method) {
    case MethodId::kVB: return "VB";
    case MethodId::kRlhfGeneral: return "RLHF_GENERAL";
    case MethodId::kPP: return "PP";
    case MethodId::kMT: return "MT";
    case MethodId::kPMORL: return "PMORL";
    case MethodId::kPSoups: return "PSOUPS";
  }
  return "?";
}

MethodId method_from_string(std::string_view name) {
  for (MethodId m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

bool uses_combination_mask(MethodId method) {
  return method != MethodId::kVB && method != MethodId::kRlhfGeneral;
}

Response Responder::respond(const Prompt& prompt, std::uint64_t seed, double temperature) const {
  if (!policy) throw std::logic_error("responder has no policy");
  return sample_response(policy->architecture, policy->params, prompt, mask, seed, temperature);
}

}  // namespace rlphf
