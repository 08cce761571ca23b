// SPDX-License-Identifier: Apache-2.0
#include "rlphf/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rlphf/reward_model.hpp"

namespace rlphf {

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

constexpr std::size_t kPreambleSize = 20;

}  // namespace

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

std::string encode_checkpoint(const CheckpointFile& file) {
  const std::string header = file.header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le(out, kCheckpointFormatVersion, 4);
  put_le(out, header.size(), 8);
  out += header;
  out.reserve(out.size() + 4 * file.values.size());
  for (double v : file.values) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
  return out;
}

CheckpointFile decode_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < kPreambleSize || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError(origin + ": not a checkpoint file (bad magic)");
  }
  const auto version = get_le(bytes, 8, 4);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError(origin + ": unsupported checkpoint format version " +
                          std::to_string(version));
  }
  const auto header_len = get_le(bytes, 12, 8);
  if (header_len > bytes.size() - kPreambleSize) {
    throw CheckpointError(origin + ": truncated header");
  }
  CheckpointFile f;
  try {
    f.header = nlohmann::json::parse(bytes.substr(kPreambleSize, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(origin + ": malformed header: " + e.what());
  }
  const std::size_t payload = kPreambleSize + header_len;
  const auto count = f.header.value("param_count", std::uint64_t{0});
  if (bytes.size() - payload != 4 * count) {
    throw CheckpointError(origin + ": payload holds " + std::to_string((bytes.size() - payload) / 4) +
                          " values but header declares " + std::to_string(count));
  }
  f.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    f.values[i] = static_cast<double>(
        std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, payload + 4 * i, 4))));
  }
  return f;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  write_file_atomic(path, encode_checkpoint(file));
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("missing checkpoint: ") + e.what());
  }
  return decode_checkpoint(bytes, path.string());
}

PreferenceMask PolicyCheckpoint::effective_mask() const {
  if (inference_mask.empty()) {
    return PreferenceMask(static_cast<std::size_t>(architecture.mask_length), 0);
  }
  return inference_mask;
}

CheckpointFile to_checkpoint_file(const PolicyCheckpoint& ckpt) {
  check_compatible(ckpt.architecture, ckpt.params);
  if (ckpt.mask_symbols.size() != static_cast<std::size_t>(ckpt.architecture.mask_length)) {
    throw CheckpointError("policy checkpoint: mask symbols do not match mask length");
  }
  CheckpointFile f;
  f.header = {{"format_version", kCheckpointFormatVersion},
              {"model_kind", "policy"},
              {"architecture", ckpt.architecture.to_json()},
              {"fingerprint", fingerprint_hex(ckpt.params.fingerprint)},
              {"param_count", ckpt.params.size()},
              {"mask_symbols", ckpt.mask_symbols},
              {"inference_mask", ckpt.inference_mask},
              {"seed", ckpt.seed},
              {"config_hash", ckpt.config_hash},
              {"provenance", ckpt.provenance}};
  f.values = ckpt.params.values;
  return f;
}

PolicyCheckpoint policy_from_checkpoint_file(const CheckpointFile& file,
                                             const std::string& origin) {
  if (file.header.value("model_kind", "") != "policy") {
    throw CheckpointError(origin + ": not a policy checkpoint");
  }
  PolicyCheckpoint c;
  c.architecture = PolicyArchitecture::from_json(file.header.at("architecture"));
  if (file.header.value("fingerprint", "") != fingerprint_hex(c.architecture.fingerprint())) {
    throw CheckpointError(origin + ": fingerprint does not match the stored architecture");
  }
  c.params = ParameterVector{file.values, c.architecture.fingerprint()};
  if (c.params.size() != c.architecture.parameter_count()) {
    throw CheckpointError(origin + ": parameter count does not match the architecture");
  }
  c.mask_symbols = file.header.at("mask_symbols").get<std::vector<std::string>>();
  c.inference_mask = file.header.value("inference_mask", PreferenceMask{});
  c.seed = file.header.value("seed", std::uint64_t{0});
  c.config_hash = file.header.value("config_hash", "");
  c.provenance = file.header.value("provenance", nlohmann::json::object());
  return c;
}

void save_policy(const std::filesystem::path& path, const PolicyCheckpoint& ckpt) {
  write_checkpoint_file(path, to_checkpoint_file(ckpt));
}

PolicyCheckpoint load_policy(const std::filesystem::path& path) {
  return policy_from_checkpoint_file(read_checkpoint_file(path), path.string());
}

VerifyResult verify_checkpoint(const std::filesystem::path& path) {
  VerifyResult r;
  try {
    const auto file = read_checkpoint_file(path);
    r.model_kind = file.header.value("model_kind", "");
    std::uint64_t expected = 0;
    std::size_t count = 0;
    if (r.model_kind == "policy") {
      const auto a = PolicyArchitecture::from_json(file.header.at("architecture"));
      expected = a.fingerprint();
      count = a.parameter_count();
    } else if (r.model_kind == "reward_model") {
      const auto a = RewardArchitecture::from_json(file.header.at("architecture"));
      expected = a.fingerprint();
      count = a.parameter_count();
    } else {
      r.message = path.string() + ": unknown model kind '" + r.model_kind + "'";
      return r;
    }
    if (file.header.value("fingerprint", "") != fingerprint_hex(expected)) {
      r.message = path.string() + ": fingerprint mismatch (header " +
                  file.header.value("fingerprint", "") + ", architecture " +
                  fingerprint_hex(expected) + ")";
      return r;
    }
    if (file.values.size() != count) {
      r.message = path.string() + ": parameter count mismatch";
      return r;
    }
    for (double v : file.values) {
      if (!std::isfinite(v)) {
        r.message = path.string() + ": non-finite parameter";
        return r;
      }
    }
    r.ok = true;
    r.message = path.string() + ": ok (" + r.model_kind + ", " + std::to_string(count) +
                " parameters, fingerprint " + fingerprint_hex(expected) + ")";
  } catch (const std::exception& e) {
    r.message = e.what();
  }
  return r;
}

}  // namespace rlphf
