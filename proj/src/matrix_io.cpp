// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "sdaudio/error.hpp"

namespace sdaudio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f32(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t get_u32(std::string_view in, std::size_t offset) {
  require(offset + 4 <= in.size(), ErrorKind::Format, "truncated binary record");
  std::uint32_t v;
  std::memcpy(&v, in.data() + offset, 4);
  return v;
}

float get_f32(std::string_view in, std::size_t offset) {
  require(offset + 4 <= in.size(), ErrorKind::Format, "truncated binary record");
  float v;
  std::memcpy(&v, in.data() + offset, 4);
  return v;
}

std::string encode_matrix_f32(const Matrix& m) {
  require(m.rows() <= std::numeric_limits<std::uint32_t>::max() &&
              m.cols() <= std::numeric_limits<std::uint32_t>::max(),
          ErrorKind::Contract, "matrix too large for container");
  std::string out;
  out.reserve(kMatrixHeaderBytes + 4 * m.size());
  out.append(kMatrixMagic);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, static_cast<float>(m(r, c)));
  return out;
}

Matrix decode_matrix_f32(std::string_view bytes) {
  require(bytes.size() >= kMatrixHeaderBytes && bytes.substr(0, 8) == kMatrixMagic,
          ErrorKind::Format, "not a float32 matrix container (bad magic)");
  const auto rows = get_u32(bytes, 8);
  const auto cols = get_u32(bytes, 12);
  const std::size_t expected = kMatrixHeaderBytes + 4ULL * rows * cols;
  require(bytes.size() == expected, ErrorKind::Format,
          "matrix container size mismatch: expected " + std::to_string(expected) + " bytes, got " +
              std::to_string(bytes.size()));
  Matrix m(rows, cols);
  std::size_t off = kMatrixHeaderBytes;
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c, off += 4) m(r, c) = get_f32(bytes, off);
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorKind::Io, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path.string());
}

void write_matrix_f32(const std::filesystem::path& path, const Matrix& m) {
  write_file(path, encode_matrix_f32(m));
}

Matrix read_matrix_f32(const std::filesystem::path& path) {
  return decode_matrix_f32(read_file(path));
}

}  // namespace sdaudio
