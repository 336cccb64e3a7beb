// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sdaudio/types.hpp"

namespace sdaudio {

// Flat float32 matrix container:
//   bytes 0..7   magic "SDAMAT01"
//   bytes 8..11  rows (uint32, little-endian)
//   bytes 12..15 cols (uint32, little-endian)
//   then rows*cols float32 little-endian values, row-major.
inline constexpr std::string_view kMatrixMagic = "SDAMAT01";
inline constexpr std::size_t kMatrixHeaderBytes = 16;

std::string encode_matrix_f32(const Matrix& m);
Matrix decode_matrix_f32(std::string_view bytes);

void write_matrix_f32(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_f32(const std::filesystem::path& path);

// Little-endian scalar helpers shared by the binary formats.
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
std::uint32_t get_u32(std::string_view in, std::size_t offset);
float get_f32(std::string_view in, std::size_t offset);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sdaudio
