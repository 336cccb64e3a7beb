// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdaudio/audio.hpp"
#include "sdaudio/encoder.hpp"

namespace sdaudio {

struct ProbeConfig {
  double lr = 0.001;
  int batch = 32;
  int epochs = 50;
  /// Z-score features with training-set statistics before the affine layer.
  bool standardize = true;

  void validate() const;
};

/// Affine classifier on (optionally standardized) frozen features.
struct LinearProbe {
  Matrix weight;  // [t x d]
  Vector bias;    // [t]
  Vector mean;    // [d], zeros when not standardizing
  Vector scale;   // [d], 1/std or ones

  int class_count() const { return static_cast<int>(weight.rows()); }
  Matrix logits(const Matrix& features) const;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // -1 for classes absent from the test set
  int n_test = 0;
  int correct = 0;
  std::string encoder_id;
  ProbeConfig probe;

  std::string to_json() const;
};

/// Pooled block-3 features of the student (blocks 1-3), one row per view.
Matrix extract_frozen_features(const EncoderParams& student, std::span<const LogMelSpec> views,
                               std::size_t chunk = 64);

/// Initial probe: N(0, 0.01^2) weights, zero bias, statistics from `features`.
LinearProbe init_linear_probe(const Matrix& features, int class_count, const ProbeConfig& cfg,
                              std::uint64_t seed);

/// Softmax cross-entropy SGD over the feature table only.
LinearProbe train_linear_probe(const Matrix& features, const std::vector<int>& labels,
                               int class_count, const ProbeConfig& cfg, std::uint64_t seed);

/// Argmax predictions, ties to the lowest class index.
std::vector<int> predict(const LinearProbe& probe, const Matrix& features);

EvalReport evaluate(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels);

}  // namespace sdaudio
