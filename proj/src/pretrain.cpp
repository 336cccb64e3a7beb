// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdaudio/error.hpp"

namespace sdaudio {

PretrainConfig PretrainConfig::desk() {
  PretrainConfig c;
  c.clusters = 8;
  c.batch = 32;
  c.epochs = 5;
  c.lr = 0.05;  // 40 steps in total; 0.005 barely moves the loss
  return c;
}

void PretrainConfig::validate() const {
  require(clusters > 0, ErrorKind::Config, "pretrain.clusters must be positive");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::Config, "pretrain.lr must be positive");
  require(batch > 0, ErrorKind::Config, "pretrain.batch must be positive");
  require(epochs > 0, ErrorKind::Config, "pretrain.epochs must be positive");
  require(augment.crop_frames > 0 && augment.noise_std >= 0.0, ErrorKind::Config,
          "pretrain augmentation is invalid");
}

bool EmbeddingMemoryBank::complete() const {
  for (int t : epoch_tag)
    if (t < 0) return false;
  return !epoch_tag.empty();
}

void EmbeddingMemoryBank::write(std::span<const std::size_t> indices, const Matrix& normalized,
                                int epoch) {
  require(normalized.rows() == static_cast<Eigen::Index>(indices.size()) &&
              normalized.cols() == slots.cols(),
          ErrorKind::Contract, "memory bank write has the wrong shape");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < epoch_tag.size(), ErrorKind::Contract, "memory bank index out of range");
    slots.row(static_cast<Eigen::Index>(indices[i])) = normalized.row(static_cast<Eigen::Index>(i));
    epoch_tag[indices[i]] = epoch;
  }
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

double multinomial_log_loss(const Matrix& p, std::span<const int> targets) {
  require(p.rows() == static_cast<Eigen::Index>(targets.size()) && p.rows() > 0, ErrorKind::Contract,
          "probability batch and targets are not aligned");
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    require(std::abs(p.row(r).sum() - 1.0) <= 1e-6 && (p.row(r).array() >= 0.0).all(),
            ErrorKind::Contract, "row " + std::to_string(r) + " is not a probability distribution");
    const int t = targets[r];
    require(t >= 0 && t < p.cols(), ErrorKind::Contract, "target index out of range");
    total -= std::log(std::max(p(r, t), 1e-12));
  }
  return total / static_cast<double>(p.rows());
}

double multinomial_log_loss(const Matrix& p, const Matrix& q) {
  require(q.rows() == p.rows() && q.cols() == p.cols(), ErrorKind::Contract,
          "p and q must have the same shape");
  std::vector<int> targets(q.rows());
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    Eigen::Index k;
    q.row(r).maxCoeff(&k);
    const bool one_hot = q(r, k) == 1.0 && q.row(r).sum() == 1.0 && (q.row(r).array() >= 0.0).all();
    require(one_hot, ErrorKind::Contract, "q row " + std::to_string(r) + " is not one-hot");
    targets[r] = static_cast<int>(k);
  }
  return multinomial_log_loss(p, targets);
}

PseudoLabelSet assignment_phase(const EmbeddingMemoryBank& bank, int k, const KMeansOptions& opts,
                                Rng& rng, EncoderParams& params, int epoch, ClusterResult* result) {
  require(bank.complete(), ErrorKind::State,
          "assignment phase needs a fully populated memory bank");
  require(params.prototypes.weight.rows() == k && params.prototypes.weight.cols() == bank.slots.cols(),
          ErrorKind::Contract, "prototype head shape does not match K x proj_out");
  ClusterResult r = spherical_kmeans(make_bank(bank.slots), k, opts, rng);
  params.prototypes.weight = r.centroids.columns.transpose();
  PseudoLabelSet labels{r.labels, epoch};
  if (result) *result = std::move(r);
  return labels;
}

PretrainForward pretrain_loss(const EncoderParams& params, std::span<const LogMelSpec> batch,
                              std::span<const int> labels, EncoderParams* grads) {
  require(labels.size() == batch.size(), ErrorKind::Contract, "batch and labels are not aligned");
  EncoderTape tape;
  const BlockFeatures feats = forward(params, batch, kBlockCount, grads ? &tape : nullptr);
  const Matrix& f4 = feats.final();
  const Matrix hidden = linear_forward(params.proj_hidden, f4);
  const Matrix act = silu(hidden);
  PretrainForward out;
  out.embeddings = linear_forward(params.proj_out, act);
  const Matrix logits = linear_forward(params.prototypes, out.embeddings);
  const Matrix logp = log_softmax_rows(logits);
  const auto n = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < logits.cols(), ErrorKind::Contract,
            "pseudo-label out of range");
    out.loss -= logp(static_cast<Eigen::Index>(i), labels[i]);
  }
  out.loss /= n;
  if (!grads) return out;

  Matrix dlogits = logp.array().exp().matrix();
  for (std::size_t i = 0; i < labels.size(); ++i) dlogits(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  dlogits /= n;
  const Matrix dg = dlogits * params.prototypes.weight;
  Matrix dact;
  linear_backward(params.proj_out, act, dg, grads->proj_out, &dact);
  const Matrix dhidden = dact.cwiseProduct(silu_grad(hidden));
  Matrix df4;
  linear_backward(params.proj_hidden, f4, dhidden, grads->proj_hidden, &df4);
  std::array<Matrix, kBlockCount> fg;
  fg[kBlockCount - 1] = std::move(df4);
  backward(params, tape, fg, *grads);
  return out;
}

FreezeSet pretrain_frozen() {
  return {{"prototypes.", "classifier.", "aux"}};
}

PretrainForward pretrain_step(EncoderParams& params, std::span<const LogMelSpec> batch,
                              std::span<const int> labels, double lr) {
  EncoderParams grads = params.zeros_like();
  PretrainForward fwd = pretrain_loss(params, batch, labels, &grads);
  sgd_step(params, grads, lr, pretrain_frozen());
  fwd.embeddings = normalize_rows(fwd.embeddings);
  return fwd;
}

PretrainResult run_pretraining(const PretrainConfig& cfg, const EncoderConfig& encoder,
                               const std::vector<LogMelSpec>& data, std::uint64_t seed,
                               const PretrainHooks& hooks) {
  cfg.validate();
  require(!data.empty(), ErrorKind::Config, "pre-training dataset is empty");
  require(static_cast<int>(data.size()) >= cfg.clusters, ErrorKind::Config,
          "pre-training needs N >= K (N=" + std::to_string(data.size()) +
              ", K=" + std::to_string(cfg.clusters) + "); lower pretrain.clusters");
  require(encoder.prototype_count == cfg.clusters, ErrorKind::Config,
          "encoder prototype count must equal pretrain.clusters");

  PretrainResult res;
  res.params = init_encoder(encoder, derive_seed(seed, "pretrain-init"));
  Rng aug_rng = make_rng(seed, "pretrain-augment");
  Rng order_rng = make_rng(seed, "pretrain-order");
  Rng kmeans_rng = make_rng(seed, "pretrain-kmeans");

  const std::size_t n = data.size();
  res.bank = EmbeddingMemoryBank(static_cast<Eigen::Index>(n), encoder.proj_out);
  const auto batch_size = static_cast<std::size_t>(cfg.batch);
  std::vector<LogMelSpec> views;

  auto make_views = [&](std::span<const std::size_t> idx) {
    views.clear();
    for (auto i : idx) views.push_back(sample_and_augment(data[i], cfg.augment, aug_rng));
  };

  // First epoch: fill the bank in isolation.
  {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t s = 0; s < n; s += batch_size) {
      const std::span<const std::size_t> chunk(idx.data() + s, std::min(batch_size, n - s));
      make_views(chunk);
      const BlockFeatures f = forward(res.params, views);
      res.bank.write(chunk, normalize_rows(apply_head(res.params, Head::Projector, f.final()).output), 0);
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    ClusterResult cluster;
    res.labels = assignment_phase(res.bank, cfg.clusters, cfg.kmeans, kmeans_rng, res.params, epoch,
                                  &cluster);
    if (hooks.on_assignment) hooks.on_assignment(epoch, res.params, res.labels);

    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < n; s += batch_size) {
      const std::span<const std::size_t> chunk(order.data() + s, std::min(batch_size, n - s));
      make_views(chunk);
      batch_labels.clear();
      for (auto i : chunk) batch_labels.push_back(res.labels.labels[i]);
      const PretrainForward step = pretrain_step(res.params, views, batch_labels, cfg.lr);
      res.bank.write(chunk, step.embeddings, epoch);
      loss_sum += step.loss * static_cast<double>(chunk.size());
      if (hooks.on_iteration) hooks.on_iteration(epoch, chunk, step.embeddings);
    }

    PretrainEpoch record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(n);
    record.kmeans_objective = cluster.objective;
    record.cluster_sizes.assign(cfg.clusters, 0);
    for (int l : res.labels.labels) ++record.cluster_sizes[l];
    if (hooks.on_epoch) hooks.on_epoch(record);
    res.history.push_back(std::move(record));
  }
  return res;
}

}  // namespace sdaudio
