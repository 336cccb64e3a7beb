// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdaudio/rng.hpp"
#include "sdaudio/types.hpp"

namespace sdaudio {

struct AudioClip {
  std::string id;
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;
  std::optional<int> label;
};

/// Reads a 16-bit PCM WAV file, down-mixes to mono and resamples to
/// `target_rate`. Throws ErrorKind::Io / ErrorKind::Format.
AudioClip load_audio(const std::filesystem::path& path, int target_rate = 16000);

/// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples,
               int sample_rate);

/// Hann-windowed sinc resampler. Output length is round(n * to / from).
std::vector<float> resample(const std::vector<float>& samples, int from_rate, int to_rate);

struct FeatureConfig {
  int sample_rate = 16000;
  int window = 400;  // 25 ms
  int hop = 160;     // 10 ms
  int n_fft = 512;
  int mel_bins = 64;
  double f_min = 60.0;
  double f_max = 7800.0;
  double log_floor = 1e-6;
};

// values is [frames x mel_bins].
struct LogMelSpec {
  Matrix values;
  double frame_hop = 0.01;  // seconds

  int frames() const { return static_cast<int>(values.rows()); }
  int mel_bins() const { return static_cast<int>(values.cols()); }
};

/// Triangular HTK-mel filterbank, [mel_bins x (n_fft/2 + 1)].
Matrix mel_filterbank(const FeatureConfig& cfg);

LogMelSpec compute_logmel(const AudioClip& clip, const FeatureConfig& cfg = {});

struct AugmentationPolicy {
  int crop_frames = 96;
  double noise_std = 0.0;
  bool allow_time_shift = true;
};

/// Crops (random offset when shifting is allowed, centered otherwise) to
/// exactly `crop_frames` frames, padding with the log floor when the input is
/// shorter, then adds Gaussian noise with `noise_std`.
LogMelSpec sample_and_augment(const LogMelSpec& spec, const AugmentationPolicy& policy,
                              Rng& rng, double pad_value = -13.815510557964274);

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct DatasetItem {
  std::string id;
  LogMelSpec spec;
  std::optional<int> label;
  Split split = Split::Train;
};

struct LabeledDataset {
  std::vector<DatasetItem> items;
  int class_count = 0;

  std::size_t size() const { return items.size(); }
  /// Indices of items tagged with `split`, in dataset order.
  std::vector<std::size_t> indices(Split split) const;
  /// Labels for the given indices. Throws Contract if any is missing.
  std::vector<int> labels(const std::vector<std::size_t>& idx) const;
};

/// Per class, every fourth item (index % 4 == 3) is held out for testing.
Split split_for_index(std::size_t index_in_class);

/// Each class is a fixed mixture of three sinusoids on an interleaved
/// log-frequency grid; items jitter frequency, amplitude and phase and carry
/// a small noise floor.
LabeledDataset generate_synthetic_dataset(int class_count, int n_per_class, std::uint64_t seed,
                                          const FeatureConfig& cfg = {},
                                          double clip_seconds = 1.0);

/// Builds a dataset from `root/<class>/*.wav`, classes in lexicographic order.
LabeledDataset load_wav_directory(const std::filesystem::path& root, const FeatureConfig& cfg = {});

// Dataset cache: `manifest.txt` (key=value lines) plus one flat float32
// matrix per item.
void save_dataset(const LabeledDataset& data, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace sdaudio
