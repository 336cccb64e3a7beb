// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdaudio/audio.hpp"
#include "sdaudio/clustering.hpp"
#include "sdaudio/encoder.hpp"

namespace sdaudio {

struct PretrainConfig {
  int clusters = 512;  // K
  double lr = 0.005;
  int batch = 512;
  int epochs = 100;
  KMeansOptions kmeans;
  AugmentationPolicy augment{96, 0.1, true};

  static PretrainConfig paper() { return {}; }
  static PretrainConfig desk();
  void validate() const;
};

/// One slot per dataset item holding the l2-normalized projector output g.
struct EmbeddingMemoryBank {
  Matrix slots;                 // [N x proj_out]
  std::vector<int> epoch_tag;   // epoch of the last write, -1 if never written

  EmbeddingMemoryBank() = default;
  EmbeddingMemoryBank(Eigen::Index n, Eigen::Index dim)
      : slots(Matrix::Zero(n, dim)), epoch_tag(static_cast<std::size_t>(n), -1) {}

  bool complete() const;
  void write(std::span<const std::size_t> indices, const Matrix& normalized, int epoch);
};

struct PseudoLabelSet {
  std::vector<int> labels;
  int source_epoch = 0;
};

/// Mean over the batch of -log p[true]. Rows of `p` must sum to 1 (+-1e-6);
/// entries are clamped to 1e-12 before the log.
double multinomial_log_loss(const Matrix& p, std::span<const int> targets);
/// Same, with one-hot rows in `q`.
double multinomial_log_loss(const Matrix& p, const Matrix& q);

/// Row-wise softmax and log-softmax, numerically stable.
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

/// Clusters the bank and installs C^T as the prototype head weights.
PseudoLabelSet assignment_phase(const EmbeddingMemoryBank& bank, int k, const KMeansOptions& opts,
                                Rng& rng, EncoderParams& params, int epoch,
                                ClusterResult* result = nullptr);

struct PretrainForward {
  double loss = 0.0;
  Matrix embeddings;  // raw projector outputs g, [batch x proj_out]
};

/// Loss of softmax(h_prot(h_proj(f_pre(x)))) against `labels`. When `grads`
/// is non-null the gradient of the loss is accumulated into it; the
/// prototype head never receives gradient.
PretrainForward pretrain_loss(const EncoderParams& params, std::span<const LogMelSpec> batch,
                              std::span<const int> labels, EncoderParams* grads);

/// Tensors the pre-training optimizer leaves untouched.
FreezeSet pretrain_frozen();

/// One SGD step. Returns the loss and the normalized embeddings computed in
/// this step's forward pass.
PretrainForward pretrain_step(EncoderParams& params, std::span<const LogMelSpec> batch,
                              std::span<const int> labels, double lr);

struct PretrainEpoch {
  int epoch = 0;
  double mean_loss = 0.0;
  double kmeans_objective = 0.0;
  std::vector<int> cluster_sizes;
};

struct PretrainResult {
  EncoderParams params;
  std::vector<PretrainEpoch> history;
  PseudoLabelSet labels;  // from the last assignment phase
  EmbeddingMemoryBank bank;
};

struct PretrainHooks {
  /// Called after every training iteration with the batch indices and the
  /// normalized embeddings that were written to the bank.
  std::function<void(int epoch, std::span<const std::size_t>, const Matrix&)> on_iteration;
  /// Called after every assignment phase, before training starts.
  std::function<void(int epoch, const EncoderParams&, const PseudoLabelSet&)> on_assignment;
  std::function<void(const PretrainEpoch&)> on_epoch;
};

/// Epoch 1 fills the bank with a full forward pass, clusters it and then
/// trains. Later epochs cluster the bank left by the previous epoch's
/// training iterations. Views are re-augmented every time they are drawn.
PretrainResult run_pretraining(const PretrainConfig& cfg, const EncoderConfig& encoder,
                               const std::vector<LogMelSpec>& data, std::uint64_t seed,
                               const PretrainHooks& hooks = {});

}  // namespace sdaudio
