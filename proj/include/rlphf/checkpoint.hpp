// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlphf/policy.hpp"
#include "rlphf/preference_space.hpp"

namespace rlphf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'R', 'L', 'P', 'H', 'F', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// On-disk container shared by policies and reward models.
///
///   offset  size  content
///   0       8     magic "RLPHFCKP"
///   8       4     format version, uint32 little-endian
///   12      8     header length H in bytes, uint64 little-endian
///   20      H     UTF-8 JSON header (keys sorted, no whitespace)
///   20+H    4*N   N parameters as IEEE-754 float32 little-endian
///
/// The header always carries "model_kind", "architecture", "fingerprint"
/// (16 hex digits) and "param_count" (N).
struct CheckpointFile {
  nlohmann::json header = nlohmann::json::object();
  std::vector<double> values;
};

std::string encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::string& bytes, const std::string& origin);

/// Writes through a temporary file and rename.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
/// Throws CheckpointError naming `path` on I/O or format problems.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

std::string fingerprint_hex(std::uint64_t fingerprint);

/// Writes bytes atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

struct PolicyCheckpoint {
  PolicyArchitecture architecture;
  ParameterVector params;
  /// Preference symbol addressed by each mask slot.
  std::vector<std::string> mask_symbols;
  /// Mask to use at inference; empty means the zero mask.
  PreferenceMask inference_mask;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json provenance = nlohmann::json::object();

  PreferenceMask effective_mask() const;
};

/// Stored values are rounded to float32; round-tripping a quantized
/// checkpoint is exact.
CheckpointFile to_checkpoint_file(const PolicyCheckpoint& ckpt);
PolicyCheckpoint policy_from_checkpoint_file(const CheckpointFile& file,
                                             const std::string& origin);
void save_policy(const std::filesystem::path& path, const PolicyCheckpoint& ckpt);
PolicyCheckpoint load_policy(const std::filesystem::path& path);

struct VerifyResult {
  bool ok = false;
  std::string model_kind;
  std::string message;
};

/// Recomputes the fingerprint from the stored architecture and checks it,
/// the payload size and finiteness against the header.
VerifyResult verify_checkpoint(const std::filesystem::path& path);

}  // namespace rlphf
