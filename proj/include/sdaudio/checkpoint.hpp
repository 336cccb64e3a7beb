// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sdaudio/encoder.hpp"
#include "sdaudio/types.hpp"

namespace sdaudio {

// Checkpoint file layout, all integers uint32 little-endian:
//   "SDACKPT1" | version | meta_count | (klen key vlen value)* |
//   blob_count | (nlen name rows cols float32[rows*cols] row-major)* |
//   SHA-256 of every preceding byte (32 bytes)
inline constexpr std::string_view kCheckpointMagic = "SDACKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Matrix>> blobs;

  const Matrix& blob(std::string_view name) const;
};

std::string sha256_hex(std::string_view bytes);

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Verifies the trailing hash first; a mismatch is ErrorKind::Integrity.
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Hex SHA-256 stored in the checkpoint trailer (the content hash).
std::string checkpoint_content_hash(const std::filesystem::path& path);

/// Encoder config as "encoder.*" metadata entries and back.
void put_encoder_config(std::map<std::string, std::string>& meta, const EncoderConfig& cfg);
EncoderConfig encoder_config_from_meta(const std::map<std::string, std::string>& meta);

Checkpoint checkpoint_from_params(const EncoderParams& params,
                                  const std::map<std::string, std::string>& provenance);

/// Rebuilds parameters shaped for `expected`. A blob with the wrong shape is
/// reported by name as ErrorKind::Contract.
EncoderParams params_from_checkpoint(const Checkpoint& ckpt, const EncoderConfig& expected);

void save_checkpoint(const EncoderParams& params, const std::map<std::string, std::string>& provenance,
                     const std::filesystem::path& path);
EncoderParams load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace sdaudio
