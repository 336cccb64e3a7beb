// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/probe.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sdaudio/error.hpp"
#include "sdaudio/pretrain.hpp"
#include "sdaudio/rng.hpp"

namespace sdaudio {

void ProbeConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::Config, "probe.lr must be positive");
  require(batch > 0, ErrorKind::Config, "probe.batch must be positive");
  require(epochs > 0, ErrorKind::Config, "probe.epochs must be positive");
}

Matrix LinearProbe::logits(const Matrix& features) const {
  require(features.cols() == weight.cols(), ErrorKind::Contract,
          "probe expects " + std::to_string(weight.cols()) + " features, got " +
              std::to_string(features.cols()));
  Matrix x = (features.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array();
  Matrix out = x * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["correct"] = correct;
  j["n_test"] = n_test;
  j["per_class_accuracy"] = per_class_accuracy;
  j["encoder_id"] = encoder_id;
  j["probe"] = {{"lr", probe.lr}, {"batch", probe.batch}, {"epochs", probe.epochs},
                {"standardize", probe.standardize}};
  return j.dump();
}

Matrix extract_frozen_features(const EncoderParams& student, std::span<const LogMelSpec> views,
                               std::size_t chunk) {
  Matrix out(static_cast<Eigen::Index>(views.size()), student.config.feature_dim(kStudentBlocks - 1));
  for (std::size_t s = 0; s < views.size(); s += chunk) {
    const std::size_t m = std::min(chunk, views.size() - s);
    const BlockFeatures f = forward(student, views.subspan(s, m), kStudentBlocks);
    out.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(m)) = f.pooled[kStudentBlocks - 1];
  }
  return out;
}

LinearProbe init_linear_probe(const Matrix& features, int class_count, const ProbeConfig& cfg,
                              std::uint64_t seed) {
  require(class_count >= 2 && features.rows() > 0, ErrorKind::Contract,
          "probe needs at least two classes and one feature row");
  const auto d = features.cols();
  LinearProbe p;
  Rng rng = make_rng(seed, "linear-probe-init");
  std::normal_distribution<double> dist(0.0, 0.01);
  p.weight.resize(class_count, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < class_count; ++r) p.weight(r, c) = dist(rng);
  p.bias = Vector::Zero(class_count);
  if (cfg.standardize) {
    p.mean = features.colwise().mean().transpose();
    const Vector var = (features.rowwise() - p.mean.transpose()).array().square().colwise().mean();
    p.scale = (var.array() + 1e-8).rsqrt().matrix();
  } else {
    p.mean = Vector::Zero(d);
    p.scale = Vector::Ones(d);
  }
  return p;
}

LinearProbe train_linear_probe(const Matrix& features, const std::vector<int>& labels,
                               int class_count, const ProbeConfig& cfg, std::uint64_t seed) {
  require(features.rows() == static_cast<Eigen::Index>(labels.size()) && !labels.empty(),
          ErrorKind::Contract, "probe features and labels are not aligned");
  const std::set<int> distinct(labels.begin(), labels.end());
  require(distinct.size() >= 2, ErrorKind::Contract,
          "linear probe needs at least two distinct labels (got a single class)");
  for (int y : labels)
    require(y >= 0 && y < class_count, ErrorKind::Contract, "probe label out of range");
  require(cfg.lr > 0.0 && cfg.batch > 0 && cfg.epochs >= 0, ErrorKind::Contract, "invalid probe config");

  LinearProbe p = init_linear_probe(features, class_count, cfg, seed);
  const Matrix x = (features.rowwise() - p.mean.transpose()).array().rowwise() * p.scale.transpose().array();
  Rng rng = make_rng(seed, "linear-probe-order");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < n; s += bs) {
      const std::size_t m = std::min(bs, n - s);
      Matrix xb(static_cast<Eigen::Index>(m), x.cols());
      for (std::size_t j = 0; j < m; ++j) xb.row(static_cast<Eigen::Index>(j)) = x.row(static_cast<Eigen::Index>(order[s + j]));
      Matrix logits = xb * p.weight.transpose();
      logits.rowwise() += p.bias.transpose();
      Matrix d = softmax_rows(logits);
      for (std::size_t j = 0; j < m; ++j) d(static_cast<Eigen::Index>(j), labels[order[s + j]]) -= 1.0;
      d /= static_cast<double>(m);
      p.weight.noalias() -= cfg.lr * (d.transpose() * xb);
      p.bias -= cfg.lr * d.colwise().sum().transpose();
    }
  }
  return p;
}

std::vector<int> predict(const LinearProbe& probe, const Matrix& features) {
  const Matrix logits = probe.logits(features);
  std::vector<int> out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

EvalReport evaluate(const LinearProbe& probe, const Matrix& features, const std::vector<int>& labels) {
  require(features.rows() == static_cast<Eigen::Index>(labels.size()), ErrorKind::Contract,
          "evaluation features and labels are not aligned");
  const auto pred = predict(probe, features);
  const int t = probe.class_count();
  std::vector<int> hits(t, 0), totals(t, 0);
  EvalReport r;
  r.n_test = static_cast<int>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < t, ErrorKind::Contract, "evaluation label out of range");
    ++totals[labels[i]];
    if (pred[i] == labels[i]) {
      ++hits[labels[i]];
      ++r.correct;
    }
  }
  r.accuracy = r.n_test ? static_cast<double>(r.correct) / r.n_test : 0.0;
  r.per_class_accuracy.resize(t);
  for (int c = 0; c < t; ++c)
    r.per_class_accuracy[c] = totals[c] ? static_cast<double>(hits[c]) / totals[c] : -1.0;
  return r;
}

}  // namespace sdaudio
