// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/checkpoint.hpp"

#include <openssl/evp.h>

#include <sstream>

#include "sdaudio/error.hpp"
#include "sdaudio/matrix_io.hpp"

namespace sdaudio {

namespace {

constexpr std::size_t kHashBytes = 32;

void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

std::string get_string(std::string_view in, std::size_t& off) {
  const auto len = get_u32(in, off);
  off += 4;
  require(off + len <= in.size(), ErrorKind::Format, "truncated checkpoint string");
  std::string s(in.substr(off, len));
  off += len;
  return s;
}

std::string raw_sha256(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) == 1 &&
              len == kHashBytes,
          ErrorKind::Io, "SHA-256 computation failed");
  return std::string(reinterpret_cast<const char*>(md), len);
}

std::string to_hex(std::string_view raw) {
  static const char* kDigits = "0123456789abcdef";
  std::string hex;
  hex.reserve(raw.size() * 2);
  for (unsigned char c : raw) {
    hex.push_back(kDigits[c >> 4]);
    hex.push_back(kDigits[c & 0xF]);
  }
  return hex;
}

std::string join_ints(const std::array<int, kBlockCount>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  require(it != meta.end(), ErrorKind::Format, "checkpoint metadata missing " + key);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    fail(ErrorKind::Format, "checkpoint metadata " + key + " is not an integer");
  }
}

}  // namespace

const Matrix& Checkpoint::blob(std::string_view name) const {
  for (const auto& [n, m] : blobs)
    if (n == name) return m;
  fail(ErrorKind::Format, "checkpoint has no blob named '" + std::string(name) + "'");
}

std::string sha256_hex(std::string_view bytes) { return to_hex(raw_sha256(bytes)); }

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic);
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, m] : ckpt.blobs) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, static_cast<float>(m(r, c)));
  }
  out += raw_sha256(out);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  require(bytes.size() >= kCheckpointMagic.size() + 4 + kHashBytes &&
              bytes.substr(0, kCheckpointMagic.size()) == kCheckpointMagic,
          ErrorKind::Format, "not a checkpoint file (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - kHashBytes);
  require(raw_sha256(body) == bytes.substr(bytes.size() - kHashBytes), ErrorKind::Integrity,
          "checkpoint content hash mismatch (file is corrupted)");

  Checkpoint ckpt;
  std::size_t off = kCheckpointMagic.size();
  ckpt.version = get_u32(body, off);
  off += 4;
  require(ckpt.version == kCheckpointVersion, ErrorKind::Format,
          "unsupported checkpoint version " + std::to_string(ckpt.version));
  const auto n_meta = get_u32(body, off);
  off += 4;
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(body, off);
    ckpt.meta[std::move(k)] = get_string(body, off);
  }
  const auto n_blobs = get_u32(body, off);
  off += 4;
  for (std::uint32_t i = 0; i < n_blobs; ++i) {
    std::string name = get_string(body, off);
    const auto rows = get_u32(body, off);
    const auto cols = get_u32(body, off + 4);
    off += 8;
    require(off + 4ULL * rows * cols <= body.size(), ErrorKind::Format, "truncated blob " + name);
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c, off += 4) m(r, c) = get_f32(body, off);
    ckpt.blobs.emplace_back(std::move(name), std::move(m));
  }
  require(off == body.size(), ErrorKind::Format, "trailing bytes in checkpoint");
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::string checkpoint_content_hash(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  decode_checkpoint(bytes);
  return to_hex(std::string_view(bytes).substr(bytes.size() - kHashBytes));
}

void put_encoder_config(std::map<std::string, std::string>& meta, const EncoderConfig& cfg) {
  meta["encoder.block_channels"] = join_ints(cfg.block_channels);
  meta["encoder.proj_hidden"] = std::to_string(cfg.proj_hidden);
  meta["encoder.proj_out"] = std::to_string(cfg.proj_out);
  meta["encoder.prototype_count"] = std::to_string(cfg.prototype_count);
  meta["encoder.class_count"] = std::to_string(cfg.class_count);
  meta["encoder.input_mel"] = std::to_string(cfg.input_mel);
  meta["encoder.input_frames"] = std::to_string(cfg.input_frames);
  meta["encoder.profile"] = to_string(cfg.profile);
}

EncoderConfig encoder_config_from_meta(const std::map<std::string, std::string>& meta) {
  EncoderConfig cfg;
  const auto it = meta.find("encoder.block_channels");
  require(it != meta.end(), ErrorKind::Format, "checkpoint metadata missing encoder.block_channels");
  std::istringstream ss(it->second);
  std::string part;
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    require(static_cast<bool>(std::getline(ss, part, ',')), ErrorKind::Format,
            "malformed encoder.block_channels");
    cfg.block_channels[i] = std::stoi(part);
  }
  cfg.proj_hidden = meta_int(meta, "encoder.proj_hidden");
  cfg.proj_out = meta_int(meta, "encoder.proj_out");
  cfg.prototype_count = meta_int(meta, "encoder.prototype_count");
  cfg.class_count = meta_int(meta, "encoder.class_count");
  cfg.input_mel = meta_int(meta, "encoder.input_mel");
  cfg.input_frames = meta_int(meta, "encoder.input_frames");
  cfg.profile = parse_profile(meta.at("encoder.profile"));
  return cfg;
}

Checkpoint checkpoint_from_params(const EncoderParams& params,
                                  const std::map<std::string, std::string>& provenance) {
  Checkpoint ckpt;
  ckpt.meta = provenance;
  put_encoder_config(ckpt.meta, params.config);
  params.for_each([&](const std::string& name, const auto& t) {
    ckpt.blobs.emplace_back(name, Matrix(t));
  });
  return ckpt;
}

EncoderParams params_from_checkpoint(const Checkpoint& ckpt, const EncoderConfig& expected) {
  EncoderParams p = init_encoder(expected, 0).zeros_like();
  std::size_t k = 0;
  p.for_each([&](const std::string& name, auto& t) {
    require(k < ckpt.blobs.size(), ErrorKind::Format, "checkpoint is missing blob '" + name + "'");
    const auto& [blob_name, m] = ckpt.blobs[k++];
    require(blob_name == name, ErrorKind::Format,
            "checkpoint blob order mismatch: found '" + blob_name + "', expected '" + name + "'");
    const Eigen::Index rows = t.rows(), cols = t.cols();
    require(m.rows() == rows && m.cols() == cols, ErrorKind::Contract,
            "dimension mismatch for blob '" + name + "': checkpoint has " + std::to_string(m.rows()) +
                "x" + std::to_string(m.cols()) + ", config expects " + std::to_string(rows) + "x" +
                std::to_string(cols));
    t = m;
  });
  require(k == ckpt.blobs.size(), ErrorKind::Format, "checkpoint has unexpected extra blobs");
  return p;
}

void save_checkpoint(const EncoderParams& params, const std::map<std::string, std::string>& provenance,
                     const std::filesystem::path& path) {
  write_checkpoint(checkpoint_from_params(params, provenance), path);
}

EncoderParams load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected) {
  return params_from_checkpoint(read_checkpoint(path), expected);
}

}  // namespace sdaudio
