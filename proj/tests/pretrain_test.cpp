// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sdaudio/pretrain.hpp"
#include "support.hpp"

using namespace sdaudio;

namespace {

std::vector<LogMelSpec> synthetic_specs() {
  const LabeledDataset d = generate_synthetic_dataset(4, 64, derive_seed(7, "data"));
  std::vector<LogMelSpec> out;
  for (const auto& it : d.items) out.push_back(it.spec);
  return out;
}

struct Recorded {
  PretrainResult result;
  std::map<std::size_t, Vector> last_written;
  EncoderParams last_assignment_params;
  std::vector<std::vector<int>> labels_per_epoch;
};

// The desk run is shared by several cases.
const Recorded& desk_run() {
  static const Recorded rec = [] {
    Recorded r;
    PretrainHooks hooks;
    hooks.on_iteration = [&](int, std::span<const std::size_t> idx, const Matrix& g) {
      for (std::size_t j = 0; j < idx.size(); ++j) r.last_written[idx[j]] = g.row(static_cast<Eigen::Index>(j)).transpose();
    };
    hooks.on_assignment = [&](int, const EncoderParams& p, const PseudoLabelSet& l) {
      r.last_assignment_params = p;
      r.labels_per_epoch.push_back(l.labels);
    };
    r.result = run_pretraining(PretrainConfig::desk(), EncoderConfig::desk(8, 4), synthetic_specs(), 7, hooks);
    return r;
  }();
  return rec;
}

}  // namespace

TEST_CASE("multinomial log loss identities") {
  Matrix p(1, 2);
  p << 0.5, 0.5;
  Matrix q(1, 2);
  q << 1.0, 0.0;
  CHECK(multinomial_log_loss(p, q) == doctest::Approx(0.693147180559945).epsilon(1e-14));
  CHECK(multinomial_log_loss(p, std::vector<int>{0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const Matrix uniform = Matrix::Constant(3, 512, 1.0 / 512.0);
  const double l512 = multinomial_log_loss(uniform, std::vector<int>{0, 17, 511});
  CHECK(std::abs(l512 - 6.238325) < 1e-6);
  CHECK(l512 == doctest::Approx(std::log(512.0)).epsilon(1e-14));

  const Matrix onehot = Matrix::Identity(4, 4);
  CHECK(multinomial_log_loss(onehot, onehot) <= 1e-9);

  Matrix bad(1, 2);
  bad << 0.7, 0.7;
  CHECK(sdtest::error_kind([&] { multinomial_log_loss(bad, std::vector<int>{0}); }) == ErrorKind::Contract);
}

TEST_CASE("softmax rows are stable and consistent") {
  Matrix logits(2, 3);
  logits << 1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0;
  const Matrix p = softmax_rows(logits);
  const Matrix lp = log_softmax_rows(logits);
  CHECK(p.allFinite());
  // Shifting by ~1000 costs a few hundred ulps.
  for (Eigen::Index r = 0; r < 2; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((lp.array().exp() - p.array()).abs().maxCoeff() < 1e-15);
  CHECK(p(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("assignment phase") {
  EncoderParams params = init_encoder(EncoderConfig::desk(4, 4), 1);
  const KMeansOptions opts;
  Rng rng(3);

  SUBCASE("incomplete bank is a state error") {
    EmbeddingMemoryBank bank(10, params.config.proj_out);
    CHECK(sdtest::error_kind([&] { assignment_phase(bank, 4, opts, rng, params, 1); }) == ErrorKind::State);
  }
  SUBCASE("prototype rows become the centroids and K distinct rows are a permutation") {
    EmbeddingMemoryBank bank(4, params.config.proj_out);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    Matrix rows = Matrix::Zero(4, params.config.proj_out);
    for (int i = 0; i < 4; ++i) rows(i, i * 3) = 1.0;
    bank.write(idx, rows, 0);
    ClusterResult r;
    const PseudoLabelSet labels = assignment_phase(bank, 4, opts, rng, params, 1, &r);
    CHECK(labels.source_epoch == 1);
    std::vector<int> sorted = labels.labels;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3});
    for (int k = 0; k < 4; ++k) CHECK(params.prototypes.weight.row(k) == r.centroids.columns.col(k).transpose());
  }
  SUBCASE("two blobs come back as two clusters") {
    const int n = 20, d = params.config.proj_out;
    EmbeddingMemoryBank bank(n, d);
    std::mt19937_64 g(4);
    std::normal_distribution<double> noise(0.0, 0.05);
    Matrix rows(n, d);
    std::vector<int> truth;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) rows(i, j) = noise(g);
      rows(i, i % 2) += 1.0;
      truth.push_back(i % 2);
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    bank.write(idx, normalize_rows(rows), 0);
    EncoderParams two = init_encoder(EncoderConfig::desk(2, 4), 1);
    const PseudoLabelSet labels = assignment_phase(bank, 2, opts, rng, two, 1);
    CHECK(cluster_purity(labels.labels, truth) == 1.0);
  }
}

TEST_CASE("pretrain step leaves the frozen heads alone") {
  EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 2);
  const EncoderParams before = p;
  const auto batch = sdtest::random_batch(4, 3);
  const PretrainForward out = pretrain_step(p, batch, std::vector<int>{0, 3, 5, 7}, 0.05);
  CHECK(p.prototypes.weight == before.prototypes.weight);
  CHECK(p.classifier.weight == before.classifier.weight);
  CHECK(p.aux[0].adapter.weight == before.aux[0].adapter.weight);
  CHECK(p.blocks[0].weight != before.blocks[0].weight);
  CHECK(p.proj_out.weight != before.proj_out.weight);
  for (Eigen::Index r = 0; r < out.embeddings.rows(); ++r)
    CHECK(out.embeddings.row(r).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss falls below ln 2 when each g sits on its own centroid") {
  EncoderParams p = init_encoder(EncoderConfig::desk(2, 4), 6);
  const auto batch = sdtest::random_batch(3, 8);
  const Matrix g = pretrain_loss(p, batch, std::vector<int>{0, 0, 0}, nullptr).embeddings;
  const Vector c = g.row(0).transpose().normalized();
  p.prototypes.weight.row(0) = c.transpose();
  p.prototypes.weight.row(1) = -c.transpose();
  const double loss = pretrain_loss(p, batch, std::vector<int>{0, 0, 0}, nullptr).loss;
  // Two-way softmax with logits (m, -m): loss = log(1 + exp(-2m)).
  double want = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) want += std::log1p(std::exp(-2.0 * g.row(i).dot(c))) / 3.0;
  CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  CHECK(loss < std::log(2.0));
}

TEST_CASE("pretraining gradient matches central differences") {
  const EncoderParams p = init_encoder(EncoderConfig::desk(8, 4), 11);
  const auto batch = sdtest::random_batch(2, 12);
  const std::vector<int> labels{2, 5};
  EncoderParams grads = p.zeros_like();
  pretrain_loss(p, batch, labels, &grads);
  CHECK(grads.prototypes.weight.isZero(0.0));

  const auto samples = sdtest::finite_differences(
      p, grads, [&](const EncoderParams& q) { return pretrain_loss(q, batch, labels, nullptr).loss; },
      [](const std::string& n) { return !pretrain_frozen().contains(n); }, 25, 5);
  CHECK(samples.size() >= 200);
  double worst = 0.0;
  for (const auto& s : samples) worst = std::max(worst, sdtest::relative_error(s.analytic, s.numeric, 1e-6));
  CHECK(worst < 1e-4);
}

TEST_CASE("fewer items than clusters is a config error") {
  auto cfg = PretrainConfig::desk();
  cfg.clusters = 8;
  const auto few = sdtest::random_batch(5, 1);
  CHECK(sdtest::error_kind([&] { run_pretraining(cfg, EncoderConfig::desk(8, 4), few, 1); }) == ErrorKind::Config);
}

TEST_CASE("desk pretraining lowers the loss") {
  const auto& h = desk_run().result.history;
  REQUIRE(h.size() == 5);
  CHECK(h.back().mean_loss < h.front().mean_loss);
  // Least-squares slope over the epoch means.
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    xm += static_cast<double>(i) / 5.0;
    ym += h[i].mean_loss / 5.0;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    num += (static_cast<double>(i) - xm) * (h[i].mean_loss - ym);
    den += (static_cast<double>(i) - xm) * (static_cast<double>(i) - xm);
  }
  CHECK(num / den < 0.0);
  for (const auto& e : h) {
    CHECK(std::accumulate(e.cluster_sizes.begin(), e.cluster_sizes.end(), 0) == 256);
    CHECK(e.kmeans_objective <= -0.0);
  }
}

TEST_CASE("bank slots hold the output of each item's last training iteration") {
  const Recorded& r = desk_run();
  const auto& bank = r.result.bank;
  REQUIRE(r.last_written.size() == 256);
  CHECK(bank.complete());
  for (const auto& [idx, g] : r.last_written) {
    CHECK(bank.slots.row(static_cast<Eigen::Index>(idx)) == g.transpose());
    CHECK(bank.epoch_tag[idx] == 5);
  }
}

TEST_CASE("prototype head only changes at assignment time") {
  const Recorded& r = desk_run();
  CHECK(r.result.params.prototypes.weight == r.last_assignment_params.prototypes.weight);
  CHECK(r.labels_per_epoch.size() == 5);
  CHECK(r.labels_per_epoch.back() == r.result.labels.labels);
}

TEST_CASE("pretraining is deterministic") {
  const auto again = run_pretraining(PretrainConfig::desk(), EncoderConfig::desk(8, 4), synthetic_specs(), 7);
  const auto& first = desk_run().result;
  REQUIRE(again.history.size() == first.history.size());
  for (std::size_t i = 0; i < again.history.size(); ++i) {
    CHECK(again.history[i].mean_loss == first.history[i].mean_loss);
    CHECK(again.history[i].kmeans_objective == first.history[i].kmeans_objective);
  }
  CHECK(again.params.blocks[3].weight == first.params.blocks[3].weight);
}
