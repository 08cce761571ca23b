// SPDX-License-Identifier: Apache-2.0
#include "rlphf/preference_space.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace rlphf {

namespace {

constexpr std::array<std::pair<Objective, std::string_view>, 8> kObjectiveNames{{
    {Objective::kSimple, "simple"},
    {Objective::kTechnical, "technical"},
    {Objective::kConcise, "concise"},
    {Objective::kVerbose, "verbose"},
    {Objective::kFriendly, "friendly"},
    {Objective::kUnfriendly, "unfriendly"},
    {Objective::kSassy, "sassy"},
    {Objective::kSarcastic, "sarcastic"},
}};

}  // namespace

std::string_view to_string(Objective objective) {
  for (const auto& [o, name] : kObjectiveNames) {
    if (o == objective) return name;
  }
  return "unknown";
}

Objective objective_from_string(std::string_view name) {
  for (const auto& [o, n] : kObjectiveNames) {
    if (n == name) return o;
  }
  throw PreferenceError("unknown preference objective '" + std::string(name) + "'");
}

PreferenceSpace::PreferenceSpace(std::vector<DimensionSpec> dimensions) {
  if (dimensions.empty()) throw PreferenceError("preference space has no dimensions");
  std::set<std::string> seen;
  for (std::size_t d = 0; d < dimensions.size(); ++d) {
    auto& spec = dimensions[d];
    if (spec.preferences.empty()) {
      throw PreferenceError("dimension '" + spec.name + "' has no preferences");
    }
    if (spec.preferences.size() > 26) {
      throw PreferenceError("dimension '" + spec.name + "' has more than 26 preferences");
    }
    PreferenceDimension dim;
    dim.id = static_cast<int>(d);
    dim.name = spec.name;
    for (std::size_t i = 0; i < spec.preferences.size(); ++i) {
      auto& p = spec.preferences[i];
      const std::string expected =
          "P" + std::to_string(d + 1) + static_cast<char>('A' + static_cast<int>(i));
      if (p.symbol != expected) {
        throw PreferenceError("preference symbol '" + p.symbol + "' should be '" + expected +
                              "' (dimension " + std::to_string(d + 1) + ", member " +
                              std::to_string(i + 1) + ")");
      }
      if (!seen.insert(p.symbol).second) {
        throw PreferenceError("duplicate preference symbol '" + p.symbol + "'");
      }
      dim.members.push_back(preferences_.size());
      preferences_.push_back(PreferenceId{p.symbol, static_cast<int>(d), static_cast<int>(i),
                                          p.description, p.objective});
    }
    dimensions_.push_back(std::move(dim));
  }
}

std::size_t PreferenceSpace::combination_count() const {
  std::size_t n = 1;
  for (const auto& d : dimensions_) n *= d.members.size();
  return n;
}

std::vector<std::size_t> PreferenceSpace::dimension_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& d : dimensions_) sizes.push_back(d.members.size());
  return sizes;
}

std::optional<std::size_t> PreferenceSpace::index_of(std::string_view symbol) const {
  for (std::size_t i = 0; i < preferences_.size(); ++i) {
    if (preferences_[i].symbol == symbol) return i;
  }
  return std::nullopt;
}

const PreferenceId& PreferenceSpace::find(std::string_view symbol) const {
  auto idx = index_of(symbol);
  if (!idx) throw PreferenceError("unknown preference '" + std::string(symbol) + "'");
  return preferences_[*idx];
}

std::vector<std::string> PreferenceSpace::symbols() const {
  std::vector<std::string> out;
  for (const auto& p : preferences_) out.push_back(p.symbol);
  return out;
}

PreferenceCombination PreferenceSpace::combination_from_code(std::string_view code) const {
  if (code.size() != dimensions_.size()) {
    throw PreferenceError("combination code '" + std::string(code) + "' needs " +
                          std::to_string(dimensions_.size()) + " letters");
  }
  PreferenceCombination combo;
  combo.code = std::string(code);
  for (std::size_t d = 0; d < dimensions_.size(); ++d) {
    const int idx = code[d] - 'A';
    if (idx < 0 || static_cast<std::size_t>(idx) >= dimensions_[d].members.size()) {
      throw PreferenceError("combination code '" + std::string(code) + "': letter '" +
                            std::string(1, code[d]) + "' not in dimension '" +
                            dimensions_[d].name + "'");
    }
    combo.chosen.push_back(preferences_[dimensions_[d].members[static_cast<std::size_t>(idx)]].symbol);
  }
  return combo;
}

PreferenceCombination PreferenceSpace::combination_from_mask(
    std::span<const std::uint8_t> mask) const {
  if (mask.size() != preferences_.size()) {
    throw PreferenceError("mask length " + std::to_string(mask.size()) + " != " +
                          std::to_string(preferences_.size()));
  }
  std::string code;
  for (const auto& dim : dimensions_) {
    int chosen = -1;
    for (std::size_t i = 0; i < dim.members.size(); ++i) {
      if (mask[dim.members[i]] != 0) {
        if (chosen >= 0) throw PreferenceError("mask sets two preferences in '" + dim.name + "'");
        chosen = static_cast<int>(i);
      }
    }
    if (chosen < 0) throw PreferenceError("mask sets no preference in '" + dim.name + "'");
    code.push_back(static_cast<char>('A' + chosen));
  }
  return combination_from_code(code);
}

nlohmann::json PreferenceSpace::to_json() const {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : dimensions_) {
    nlohmann::json prefs = nlohmann::json::array();
    for (auto m : d.members) {
      const auto& p = preferences_[m];
      prefs.push_back({{"symbol", p.symbol},
                       {"objective", std::string(to_string(p.objective))},
                       {"description", p.description}});
    }
    dims.push_back({{"name", d.name}, {"preferences", prefs}});
  }
  return {{"dimensions", dims}};
}

PreferenceSpace PreferenceSpace::from_json(const nlohmann::json& j) {
  if (!j.contains("dimensions") || !j.at("dimensions").is_array()) {
    throw PreferenceError("preference space: missing 'dimensions' array");
  }
  std::vector<DimensionSpec> specs;
  for (const auto& d : j.at("dimensions")) {
    DimensionSpec spec;
    spec.name = d.value("name", "");
    if (!d.contains("preferences")) {
      throw PreferenceError("dimension '" + spec.name + "': missing 'preferences'");
    }
    for (const auto& p : d.at("preferences")) {
      spec.preferences.push_back({p.at("symbol").get<std::string>(),
                                  objective_from_string(p.at("objective").get<std::string>()),
                                  p.value("description", "")});
    }
    specs.push_back(std::move(spec));
  }
  return PreferenceSpace(std::move(specs));
}

bool PreferenceSpace::operator==(const PreferenceSpace& other) const {
  return to_json() == other.to_json();
}

PreferenceSpace default_preference_space() {
  return PreferenceSpace({
      {"Expertise",
       {{"P1A", Objective::kSimple, "wording a young student can follow"},
        {"P1B", Objective::kTechnical, "wording aimed at a domain specialist"}}},
      {"Informativeness",
       {{"P2A", Objective::kConcise, "short and direct"},
        {"P2B", Objective::kVerbose, "long and thorough"}}},
      {"Style",
       {{"P3A", Objective::kFriendly, "warm and playful tone"},
        {"P3B", Objective::kUnfriendly, "curt, unfriendly tone"}}},
  });
}

PreferenceSpace extended_preference_space() {
  auto j = default_preference_space().to_json();
  auto& style = j["dimensions"][2]["preferences"];
  style.push_back({{"symbol", "P3C"}, {"objective", "sassy"}, {"description", "sassy tone"}});
  style.push_back(
      {{"symbol", "P3D"}, {"objective", "sarcastic"}, {"description", "sarcastic tone"}});
  return PreferenceSpace::from_json(j);
}

std::vector<PreferenceCombination> enumerate_combinations(const PreferenceSpace& space) {
  const auto sizes = space.dimension_sizes();
  std::vector<PreferenceCombination> out;
  out.reserve(space.combination_count());
  std::vector<std::size_t> digits(sizes.size(), 0);
  while (true) {
    std::string code;
    for (auto d : digits) code.push_back(static_cast<char>('A' + d));
    out.push_back(space.combination_from_code(code));
    // odometer increment, last dimension fastest
    std::size_t pos = sizes.size();
    while (pos > 0) {
      --pos;
      if (++digits[pos] < sizes[pos]) break;
      digits[pos] = 0;
      if (pos == 0) return out;
    }
    if (sizes.empty()) return out;
  }
}

PreferenceMask combination_mask(const PreferenceCombination& combo,
                                const PreferenceSpace& space) {
  if (combo.chosen.size() != space.dimensions().size()) {
    throw PreferenceError("combination '" + combo.code + "' has " +
                          std::to_string(combo.chosen.size()) + " choices for " +
                          std::to_string(space.dimensions().size()) + " dimensions");
  }
  PreferenceMask mask(space.n_total_preferences(), 0);
  for (std::size_t d = 0; d < combo.chosen.size(); ++d) {
    const auto& pref = space.find(combo.chosen[d]);
    if (pref.dimension_id != static_cast<int>(d)) {
      throw PreferenceError("preference '" + pref.symbol + "' is not in dimension '" +
                            space.dimensions()[d].name + "'");
    }
    mask[*space.index_of(pref.symbol)] = 1;
  }
  return mask;
}

PreferenceMask single_preference_mask(std::string_view symbol, const PreferenceSpace& space) {
  PreferenceMask mask(space.n_total_preferences(), 0);
  auto idx = space.index_of(symbol);
  if (!idx) throw PreferenceError("unknown preference '" + std::string(symbol) + "'");
  mask[*idx] = 1;
  return mask;
}

std::size_t training_cost(const PreferenceSpace& space, CompositionMethod method) {
  return method == CompositionMethod::kPromptedMorl ? space.combination_count()
                                                    : space.n_total_preferences();
}

std::size_t incremental_cost(const PreferenceSpace& old_space,
                             const PreferenceSpace& new_space, CompositionMethod method) {
  for (const auto& p : old_space.preferences()) {
    if (!new_space.contains(p.symbol)) {
      throw PreferenceError("old space is not contained in the new one: '" + p.symbol +
                            "' is missing");
    }
  }
  std::size_t added = 0;
  for (const auto& p : new_space.preferences()) {
    if (!old_space.contains(p.symbol)) ++added;
  }
  // P-MORL retrains over every combination of the new space
  if (method == CompositionMethod::kPromptedMorl) return added == 0 ? 0 : new_space.combination_count();
  return added;
}

}  // namespace rlphf
