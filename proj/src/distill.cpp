// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdaudio/error.hpp"
#include "sdaudio/pretrain.hpp"

namespace sdaudio {

DistillConfig DistillConfig::desk() {
  DistillConfig c;
  c.batch = 32;
  c.epochs = 10;
  return c;
}

void DistillConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Config,
          "distill.alpha must satisfy 0 <= alpha <= 1 (got " + std::to_string(alpha) + ")");
  require(beta >= 0.0 && std::isfinite(beta), ErrorKind::Config, "distill.beta must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::Config, "distill.lr must be positive");
  require(batch > 0, ErrorKind::Config, "distill.batch must be positive");
  require(epochs > 0, ErrorKind::Config, "distill.epochs must be positive");
  require(augment.crop_frames > 0 && augment.noise_std >= 0.0, ErrorKind::Config,
          "distill augmentation is invalid");
}

double LossBreakdown::compose(double ce, const std::array<double, kStudentBlocks>& aux_ce,
                              const std::array<double, kStudentBlocks>& kl,
                              const std::array<double, kStudentBlocks>& mse, double alpha,
                              double beta) {
  double s_ce = 0.0, s_kl = 0.0, s_mse = 0.0;
  for (int i = 0; i < kStudentBlocks; ++i) {
    s_ce += aux_ce[i];
    s_kl += kl[i];
    s_mse += mse[i];
  }
  return ce + alpha * s_ce + (1.0 - alpha) * s_kl + beta * s_mse;
}

std::vector<std::pair<std::string, double>> LossBreakdown::named() const {
  std::vector<std::pair<std::string, double>> out{{"L_ce", ce}};
  for (int i = 0; i < kStudentBlocks; ++i) out.emplace_back("L_ce_" + std::to_string(i + 1), aux_ce[i]);
  for (int i = 0; i < kStudentBlocks; ++i) out.emplace_back("L_kl_" + std::to_string(i + 1), kl[i]);
  for (int i = 0; i < kStudentBlocks; ++i) out.emplace_back("L_mse_" + std::to_string(i + 1), mse[i]);
  out.emplace_back("L_all", total);
  return out;
}

PseudoLabels generate_pseudo_labels(const EncoderParams& pretrained, std::span<const LogMelSpec> views,
                                    int class_count, const KMeansOptions& opts, std::uint64_t seed,
                                    const std::vector<int>* truth) {
  require(class_count > 0 && static_cast<int>(views.size()) >= class_count, ErrorKind::Contract,
          "pseudo-labelling needs N >= t (N=" + std::to_string(views.size()) +
              ", t=" + std::to_string(class_count) + ")");
  const BlockFeatures feats = forward(pretrained, views);
  Rng rng = make_rng(seed, "pseudo-labels");
  const ClusterResult r = spherical_kmeans(make_bank(feats.final()), class_count, opts, rng);
  PseudoLabels out;
  out.labels = r.labels;
  out.objective = r.objective;
  if (truth) out.purity = cluster_purity(out.labels, *truth);
  return out;
}

LossBreakdown distill_forward_losses(const EncoderParams& params, std::span<const LogMelSpec> batch,
                                     std::span<const int> labels, const DistillConfig& cfg,
                                     EncoderParams* grads, const LossWeights* weights) {
  require(labels.size() == batch.size(), ErrorKind::Contract, "batch and pseudo-labels are not aligned");
  const int t = params.config.class_count;
  for (int y : labels) require(y >= 0 && y < t, ErrorKind::Contract, "pseudo-label out of range");

  EncoderTape tape;
  const BlockFeatures feats = forward(params, batch, kBlockCount, grads ? &tape : nullptr);
  const Matrix& f4 = feats.final();
  const auto n = static_cast<double>(batch.size());
  const auto rows = static_cast<Eigen::Index>(batch.size());

  auto cross_entropy = [&](const Matrix& logp) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) s -= logp(r, labels[r]);
    return s / n;
  };
  auto ce_grad = [&](const Matrix& logp) {
    Matrix d = logp.array().exp().matrix();
    for (Eigen::Index r = 0; r < rows; ++r) d(r, labels[r]) -= 1.0;
    return Matrix(d / n);
  };

  LossBreakdown out;
  const Matrix logits = linear_forward(params.classifier, f4);
  const Matrix teacher_logp = log_softmax_rows(logits);
  const Matrix teacher_p = teacher_logp.array().exp().matrix();
  out.ce = cross_entropy(teacher_logp);

  const LossWeights w = weights ? *weights : LossWeights::from(cfg);
  std::array<Matrix, kBlockCount> fg;
  Matrix df4;
  if (grads) {
    const Matrix dl = w.ce * ce_grad(teacher_logp);
    linear_backward(params.classifier, f4, dl, grads->classifier, &df4);
  }

  for (int i = 0; i < kStudentBlocks; ++i) {
    const auto& head = params.aux[i];
    const Matrix& fi = feats.pooled[i];
    const Matrix u = linear_forward(head.adapter, fi);
    require(u.cols() == f4.cols(), ErrorKind::Contract, "adapter output width must equal d_4");
    const Matrix s = silu(u);
    const Matrix z = linear_forward(head.classifier, s);
    const Matrix logq = log_softmax_rows(z);
    out.aux_ce[i] = cross_entropy(logq);
    out.kl[i] = (teacher_p.array() * (teacher_logp - logq).array()).sum() / n;
    const Matrix diff = u - f4;
    out.mse[i] = diff.squaredNorm() / static_cast<double>(diff.size());

    if (!grads) continue;
    const Matrix q = logq.array().exp().matrix();
    const Matrix dz = w.aux_ce * ce_grad(logq) + w.kl * (q - teacher_p) / n;
    Matrix ds;
    linear_backward(head.classifier, s, dz, grads->aux[i].classifier, &ds);
    const Matrix du = ds.cwiseProduct(silu_grad(u)) + (w.mse * 2.0 / static_cast<double>(diff.size())) * diff;
    Matrix dfi;
    linear_backward(head.adapter, fi, du, grads->aux[i].adapter, &dfi);
    fg[i] = std::move(dfi);
  }
  out.total = LossBreakdown::compose(out.ce, out.aux_ce, out.kl, out.mse, cfg.alpha, cfg.beta);

  if (grads) {
    fg[kBlockCount - 1] = std::move(df4);
    backward(params, tape, fg, *grads);
  }
  return out;
}

FreezeSet distill_frozen() {
  return {{"proj.", "prototypes."}};
}

DistillResult run_distillation(const DistillConfig& cfg, const EncoderConfig& encoder,
                               const std::vector<LogMelSpec>& data, const std::vector<int>& labels,
                               std::uint64_t seed, const DistillHooks& hooks) {
  cfg.validate();
  require(!data.empty() && data.size() == labels.size(), ErrorKind::Contract,
          "distillation data and pseudo-labels must be non-empty and aligned");
  DistillResult res;
  res.params = init_encoder(encoder, derive_seed(seed, "distill-init"));
  Rng aug_rng = make_rng(seed, "distill-augment");
  Rng order_rng = make_rng(seed, "distill-order");
  const FreezeSet frozen = distill_frozen();

  const std::size_t n = data.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<LogMelSpec> views;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    LossBreakdown sum;
    for (std::size_t s = 0; s < n; s += batch_size) {
      const std::size_t m = std::min(batch_size, n - s);
      views.clear();
      batch_labels.clear();
      for (std::size_t j = s; j < s + m; ++j) {
        views.push_back(sample_and_augment(data[order[j]], cfg.augment, aug_rng));
        batch_labels.push_back(labels[order[j]]);
      }
      EncoderParams grads = res.params.zeros_like();
      const LossBreakdown b = distill_forward_losses(res.params, views, batch_labels, cfg, &grads);
      sgd_step(res.params, grads, cfg.lr, frozen);
      const double wgt = static_cast<double>(m);
      sum.ce += wgt * b.ce;
      for (int i = 0; i < kStudentBlocks; ++i) {
        sum.aux_ce[i] += wgt * b.aux_ce[i];
        sum.kl[i] += wgt * b.kl[i];
        sum.mse[i] += wgt * b.mse[i];
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    sum.ce *= inv;
    for (int i = 0; i < kStudentBlocks; ++i) {
      sum.aux_ce[i] *= inv;
      sum.kl[i] *= inv;
      sum.mse[i] *= inv;
    }
    sum.total = LossBreakdown::compose(sum.ce, sum.aux_ce, sum.kl, sum.mse, cfg.alpha, cfg.beta);
    if (hooks.on_epoch) hooks.on_epoch(epoch, sum);
    res.history.push_back(sum);
  }
  return res;
}

}  // namespace sdaudio
