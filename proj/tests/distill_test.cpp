// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include <set>

#include "doctest.h"
#include "sdaudio/distill.hpp"
#include "sdaudio/pretrain.hpp"
#include "support.hpp"

using namespace sdaudio;

namespace {

double student_grad_norm(const EncoderParams& g) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += g.blocks[i].weight.squaredNorm();
  return std::sqrt(s);
}

std::vector<LogMelSpec> train_views(std::vector<int>& labels) {
  const LabeledDataset d = generate_synthetic_dataset(4, 64, derive_seed(7, "data"));
  std::vector<LogMelSpec> out;
  for (auto i : d.indices(Split::Train)) out.push_back(d.items[i].spec);
  labels = d.labels(d.indices(Split::Train));
  return out;
}

}  // namespace

TEST_CASE("coefficient collapse") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 1);
  const auto batch = sdtest::random_batch(3, 2);
  DistillConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = 0.0;
  const LossBreakdown b = distill_forward_losses(p, batch, std::vector<int>{0, 1, 3}, cfg);
  CHECK(b.total == b.ce + (b.aux_ce[0] + b.aux_ce[1] + b.aux_ce[2]));
  CHECK(b.named().size() == 11);
  CHECK(b.named().back().first == "L_all");
}

TEST_CASE("identical teacher and student logits give zero KL") {
  EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 1);
  Vector bias(4);
  bias << 0.3, -1.0, 2.0, 0.1;
  p.classifier.weight.setZero();
  p.classifier.bias = bias;
  for (auto& h : p.aux) {
    h.classifier.weight.setZero();
    h.classifier.bias = bias;
  }
  const LossBreakdown b = distill_forward_losses(p, sdtest::random_batch(2, 5), std::vector<int>{1, 2}, DistillConfig{});
  for (double kl : b.kl) CHECK(std::abs(kl) <= 1e-9);
}

TEST_CASE("every component and the total match an independent recomputation") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 3);
  const auto batch = sdtest::random_batch(2, 9);
  const std::vector<int> y{3, 0};
  const DistillConfig cfg;  // alpha 0.7, beta 0.003
  const LossBreakdown b = distill_forward_losses(p, batch, y, cfg);
  const sdtest::Terms t = sdtest::distill_terms(p, batch, y);
  CHECK(std::abs(b.ce - t.ce) <= 1e-10);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(b.aux_ce[i] - t.aux_ce[i]) <= 1e-10);
    CHECK(std::abs(b.kl[i] - t.kl[i]) <= 1e-10);
    CHECK(std::abs(b.mse[i] - t.mse[i]) <= 1e-10);
    CHECK(b.kl[i] >= 0.0);
    CHECK(b.mse[i] >= 0.0);
  }
  CHECK(std::abs(b.total - sdtest::recompose(t, 0.7, 0.003)) <= 1e-10);
}

TEST_CASE("recomposition holds across random alpha, beta and batch sizes") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 4);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int draw = 0; draw < 50; ++draw) {
    DistillConfig cfg;
    cfg.alpha = draw == 0 ? 0.0 : draw == 1 ? 1.0 : unit(rng);
    cfg.beta = draw == 2 ? 0.0 : unit(rng) * 0.01;
    const std::size_t n = 1 + static_cast<std::size_t>(rng() % 4);
    const auto batch = sdtest::random_batch(n, 100 + static_cast<std::uint64_t>(draw));
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % 4);
    const LossBreakdown b = distill_forward_losses(p, batch, y, cfg);
    CHECK(std::abs(b.total - LossBreakdown::compose(b.ce, b.aux_ce, b.kl, b.mse, cfg.alpha, cfg.beta)) <= 1e-10);
    CHECK(std::abs(b.total - sdtest::recompose(sdtest::distill_terms(p, batch, y), cfg.alpha, cfg.beta)) <= 1e-10);
  }
}

TEST_CASE("detached targets send no gradient to block 4 or the classifier") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 5);
  const auto batch = sdtest::random_batch(2, 6);
  const std::vector<int> y{1, 2};
  for (const LossWeights w : {LossWeights{0, 0, 1, 1}, LossWeights{0, 0, 1, 0}, LossWeights{0, 0, 0, 1}}) {
    EncoderParams g = p.zeros_like();
    distill_forward_losses(p, batch, y, DistillConfig{}, &g, &w);
    CHECK((g.blocks[3].weight.array() == 0.0).all());
    CHECK((g.blocks[3].bias.array() == 0.0).all());
    CHECK((g.classifier.weight.array() == 0.0).all());
    CHECK((g.classifier.bias.array() == 0.0).all());
    CHECK(student_grad_norm(g) > 0.0);
  }
}

TEST_CASE("each auxiliary loss alone reaches blocks 1-3") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 6);
  const auto batch = sdtest::random_batch(2, 7);
  const std::vector<int> y{0, 3};
  for (const LossWeights w : {LossWeights{0, 1, 0, 0}, LossWeights{0, 0, 1, 0}, LossWeights{0, 0, 0, 1}}) {
    EncoderParams g = p.zeros_like();
    distill_forward_losses(p, batch, y, DistillConfig{}, &g, &w);
    for (int i = 0; i < 3; ++i) CHECK(g.blocks[i].weight.norm() > 0.0);
  }
}

TEST_CASE("distillation gradient matches central differences with the targets held fixed") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 7);
  const auto batch = sdtest::random_batch(2, 8);
  const std::vector<int> y{2, 1};
  const DistillConfig cfg;
  EncoderParams grads = p.zeros_like();
  distill_forward_losses(p, batch, y, cfg, &grads);

  // Detached teacher distribution and final features at the expansion point.
  const BlockFeatures f0 = forward(p, batch);
  const Matrix logits0 = apply_head(p, Head::Classifier, f0.final()).output;
  Matrix teacher = logits0;
  for (Eigen::Index r = 0; r < teacher.rows(); ++r) {
    teacher.row(r) = (logits0.row(r).array() - logits0.row(r).maxCoeff()).exp().matrix();
    teacher.row(r) /= teacher.row(r).sum();
  }
  auto loss = [&](const EncoderParams& q) {
    return sdtest::recompose(sdtest::distill_terms(q, batch, y, teacher, f0.final()), cfg.alpha, cfg.beta);
  };
  const auto samples = sdtest::finite_differences(
      p, grads, loss, [](const std::string& n) { return !distill_frozen().contains(n); }, 12, 3);
  CHECK(samples.size() >= 200);
  double worst = 0.0;
  for (const auto& s : samples) worst = std::max(worst, sdtest::relative_error(s.analytic, s.numeric, 1e-6));
  CHECK(worst < 1e-4);
  CHECK(grads.proj_hidden.weight.isZero(0.0));
  CHECK(grads.prototypes.weight.isZero(0.0));
}

TEST_CASE("pseudo-labels") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 8);
  const KMeansOptions opts;
  SUBCASE("t = N gives every item its own class") {
    const auto views = sdtest::random_batch(4, 3);
    const PseudoLabels l = generate_pseudo_labels(p, views, 4, opts, 1);
    CHECK(std::set<int>(l.labels.begin(), l.labels.end()).size() == 4);
    CHECK(l.purity == -1.0);
  }
  SUBCASE("same encoder and seed give the same labels") {
    const auto views = sdtest::random_batch(12, 4);
    const std::vector<int> truth{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
    const PseudoLabels a = generate_pseudo_labels(p, views, 3, opts, 5, &truth);
    const PseudoLabels b = generate_pseudo_labels(p, views, 3, opts, 5, &truth);
    CHECK(a.labels == b.labels);
    CHECK(a.purity == b.purity);
    CHECK(a.purity >= 1.0 / 3.0);
  }
  SUBCASE("fewer items than classes is a contract error") {
    const auto views = sdtest::random_batch(2, 3);
    CHECK(sdtest::error_kind([&] { generate_pseudo_labels(p, views, 4, opts, 1); }) == ErrorKind::Contract);
  }
}

TEST_CASE("desk distillation lowers L_all and leaves the pretraining heads untouched") {
  std::vector<int> labels;
  const auto views = train_views(labels);
  const auto enc = EncoderConfig::desk(8, 4);
  std::vector<LossBreakdown> seen;
  DistillHooks hooks;
  hooks.on_epoch = [&](int, const LossBreakdown& b) { seen.push_back(b); };
  const DistillResult r = run_distillation(DistillConfig::desk(), enc, views, labels, 7, hooks);
  REQUIRE(r.history.size() == 10);
  CHECK(seen.size() == 10);
  CHECK(r.history.back().total < r.history.front().total);
  int drops = 0;
  for (std::size_t i = 1; i < r.history.size(); ++i) drops += r.history[i].total < r.history[i - 1].total;
  CHECK(drops >= 7);
  const EncoderParams init = init_encoder(enc, derive_seed(7, "distill-init"));
  CHECK(r.params.proj_hidden.weight == init.proj_hidden.weight);
  CHECK(r.params.prototypes.weight == init.prototypes.weight);
  CHECK(r.params.classifier.weight != init.classifier.weight);
  CHECK(r.params.aux[2].adapter.weight != init.aux[2].adapter.weight);
}

TEST_CASE("distillation is deterministic") {
  std::vector<int> labels;
  const auto views = train_views(labels);
  auto cfg = DistillConfig::desk();
  cfg.epochs = 2;
  const DistillResult a = run_distillation(cfg, EncoderConfig::desk(8, 4), views, labels, 3);
  const DistillResult b = run_distillation(cfg, EncoderConfig::desk(8, 4), views, labels, 3);
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].named() == b.history[i].named());
  CHECK(a.params.blocks[2].weight == b.params.blocks[2].weight);
}
