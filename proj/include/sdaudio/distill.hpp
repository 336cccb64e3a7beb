// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdaudio/audio.hpp"
#include "sdaudio/clustering.hpp"
#include "sdaudio/encoder.hpp"

namespace sdaudio {

struct DistillConfig {
  double alpha = 0.7;
  double beta = 0.003;
  double lr = 0.007;
  int batch = 512;
  int epochs = 50;
  AugmentationPolicy augment{96, 0.0, true};

  static DistillConfig paper() { return {}; }
  static DistillConfig desk();
  void validate() const;
};

/// Every term of the self-distillation objective for one batch.
struct LossBreakdown {
  double ce = 0.0;                        // CE(l, y), teacher path
  std::array<double, kStudentBlocks> aux_ce{};  // CE(z^i, y)
  std::array<double, kStudentBlocks> kl{};      // KL(softmax(l) || softmax(z^i))
  std::array<double, kStudentBlocks> mse{};     // MSE(u^i, f_4)
  double total = 0.0;

  /// total = ce + alpha*sum(aux_ce) + (1-alpha)*sum(kl) + beta*sum(mse)
  static double compose(double ce, const std::array<double, kStudentBlocks>& aux_ce,
                        const std::array<double, kStudentBlocks>& kl,
                        const std::array<double, kStudentBlocks>& mse, double alpha, double beta);

  /// The ten components followed by L_all, in a stable order.
  std::vector<std::pair<std::string, double>> named() const;
};

/// Coefficients applied to each term when forming the gradient. The default
/// construction from a config reproduces L_all; tests zero individual terms
/// to isolate their gradient paths.
struct LossWeights {
  double ce = 1.0;
  double aux_ce = 0.7;
  double kl = 0.3;
  double mse = 0.003;

  static LossWeights from(const DistillConfig& cfg) {
    return {1.0, cfg.alpha, 1.0 - cfg.alpha, cfg.beta};
  }
};

struct PseudoLabels {
  std::vector<int> labels;
  double purity = -1.0;       // against true labels when available, else -1
  double objective = 0.0;     // k-means objective of the clustering
};

/// Final-block features of `pretrained` (no projector), row-normalized and
/// clustered with K = class_count.
PseudoLabels generate_pseudo_labels(const EncoderParams& pretrained, std::span<const LogMelSpec> views,
                                    int class_count, const KMeansOptions& opts, std::uint64_t seed,
                                    const std::vector<int>* truth = nullptr);

/// One forward pass and every loss term. With `grads` non-null, accumulates
/// the gradient of sum_k weights_k * term_k. Teacher logits and final pooled
/// features enter the KL and MSE terms as constants.
LossBreakdown distill_forward_losses(const EncoderParams& params, std::span<const LogMelSpec> batch,
                                     std::span<const int> labels, const DistillConfig& cfg,
                                     EncoderParams* grads = nullptr,
                                     const LossWeights* weights = nullptr);

/// Tensors the distillation optimizer leaves untouched (the pre-training heads).
FreezeSet distill_frozen();

struct DistillResult {
  EncoderParams params;
  std::vector<LossBreakdown> history;  // epoch means
};

struct DistillHooks {
  std::function<void(int epoch, const LossBreakdown&)> on_epoch;
};

/// SGD on L_all from a fresh random initialization (never from f_pre).
DistillResult run_distillation(const DistillConfig& cfg, const EncoderConfig& encoder,
                               const std::vector<LogMelSpec>& data, const std::vector<int>& labels,
                               std::uint64_t seed, const DistillHooks& hooks = {});

}  // namespace sdaudio
