// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rlphf {

class PreferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measurable behavior a preference rewards. Each maps to a scoring rule over
/// response statistics (see env.hpp).
enum class Objective {
  kSimple,
  kTechnical,
  kConcise,
  kVerbose,
  kFriendly,
  kUnfriendly,
  kSassy,
  kSarcastic,
};

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

struct PreferenceId {
  std::string symbol;  // e.g. "P1A"
  int dimension_id = 0;
  int index_within_dimension = 0;
  std::string description;
  Objective objective = Objective::kSimple;

  char letter() const { return static_cast<char>('A' + index_within_dimension); }
};

struct PreferenceDimension {
  int id = 0;
  std::string name;
  /// Positions of the members in PreferenceSpace::preferences(), in order.
  std::vector<std::size_t> members;
};

/// One chosen preference per dimension, in dimension order.
struct PreferenceCombination {
  std::vector<std::string> chosen;
  std::string code;  // e.g. "ABA"

  bool operator==(const PreferenceCombination&) const = default;
};

/// Binary conditioning vector, one slot per preference of a space.
using PreferenceMask = std::vector<std::uint8_t>;

struct PreferenceSpec {
  std::string symbol;
  Objective objective = Objective::kSimple;
  std::string description;
};

struct DimensionSpec {
  std::string name;
  std::vector<PreferenceSpec> preferences;
};

/// Immutable set of conflicting preference dimensions. Preferences are stored
/// flat in dimension-major order; that order is the mask layout.
class PreferenceSpace {
 public:
  /// Throws PreferenceError on empty dimensions, duplicate symbols, or symbols
  /// that do not follow the P<dimension><letter> scheme.
  explicit PreferenceSpace(std::vector<DimensionSpec> dimensions);

  const std::vector<PreferenceDimension>& dimensions() const { return dimensions_; }
  const std::vector<PreferenceId>& preferences() const { return preferences_; }

  std::size_t n_total_preferences() const { return preferences_.size(); }
  std::size_t combination_count() const;
  std::vector<std::size_t> dimension_sizes() const;

  std::optional<std::size_t> index_of(std::string_view symbol) const;
  /// Throws PreferenceError naming the symbol when it is unknown.
  const PreferenceId& find(std::string_view symbol) const;
  bool contains(std::string_view symbol) const { return index_of(symbol).has_value(); }

  std::vector<std::string> symbols() const;

  /// Builds the combination whose letters are `code` (one per dimension).
  PreferenceCombination combination_from_code(std::string_view code) const;
  /// Inverse of combination_mask. Throws unless the mask has exactly one set
  /// bit per dimension block.
  PreferenceCombination combination_from_mask(std::span<const std::uint8_t> mask) const;

  nlohmann::json to_json() const;
  static PreferenceSpace from_json(const nlohmann::json& j);

  bool operator==(const PreferenceSpace& other) const;

 private:
  std::vector<PreferenceDimension> dimensions_;
  std::vector<PreferenceId> preferences_;
};

/// The six-preference, three-dimension space (P1A..P3B).
PreferenceSpace default_preference_space();
/// The default space with sassy (P3C) and sarcastic (P3D) styles added.
PreferenceSpace extended_preference_space();

/// All combinations, lexicographic by code.
std::vector<PreferenceCombination> enumerate_combinations(const PreferenceSpace& space);

/// One-hot per dimension block. Throws on unknown symbols or a symbol placed
/// in the wrong dimension.
PreferenceMask combination_mask(const PreferenceCombination& combo,
                                const PreferenceSpace& space);

/// Mask with a single bit set for `symbol`.
PreferenceMask single_preference_mask(std::string_view symbol, const PreferenceSpace& space);

enum class CompositionMethod { kPromptedMorl, kPersonalizedSoups };

/// Distinct training tasks needed to cover the space.
std::size_t training_cost(const PreferenceSpace& space, CompositionMethod method);

/// New training tasks needed after growing `old_space` into `new_space`.
/// Throws PreferenceError if some preference of `old_space` is missing.
std::size_t incremental_cost(const PreferenceSpace& old_space,
                             const PreferenceSpace& new_space, CompositionMethod method);

}  // namespace rlphf
