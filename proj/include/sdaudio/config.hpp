// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "sdaudio/audio.hpp"
#include "sdaudio/distill.hpp"
#include "sdaudio/encoder.hpp"
#include "sdaudio/pretrain.hpp"
#include "sdaudio/probe.hpp"

namespace sdaudio {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | directory
  int classes = 4;
  int per_class = 64;
  double clip_seconds = 1.0;
  std::string dir;
  FeatureConfig features;
};

struct ExperimentConfig {
  ScaleProfile profile = ScaleProfile::Desk;
  std::uint64_t seed = 7;
  DataConfig data;
  EncoderConfig encoder;  // class_count is filled in once the dataset is known
  PretrainConfig pretrain;
  KMeansOptions pseudolabel_kmeans;
  DistillConfig distill;
  ProbeConfig probe;

  /// All defaults for a profile. The paper profile carries the full-scale
  /// hyperparameters; the desk profile shrinks widths by 8 and the schedule.
  static ExperimentConfig defaults(ScaleProfile profile);

  void validate() const;
  /// Fully resolved config in the same format load_config accepts.
  std::string to_yaml() const;
};

struct ConfigOverrides {
  std::optional<ScaleProfile> profile;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
};

/// Parses the hierarchical `key: value` text. Unknown keys and type
/// mismatches are ErrorKind::Config. Precedence: overrides > file > profile
/// defaults.
ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

}  // namespace sdaudio
