// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sdaudio {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// FNV-1a over the tag, folded into the master seed with splitmix64.
/// seed(stage) = splitmix64(master ^ fnv1a64(stage)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(master ^ h);
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag = {}) {
  return Rng(tag.empty() ? splitmix64(seed) : derive_seed(seed, tag));
}

}  // namespace sdaudio
