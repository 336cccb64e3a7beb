// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sdaudio/error.hpp"

namespace sdaudio {

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    require(norm > 0.0 && std::isfinite(norm), ErrorKind::Degenerate,
            "cannot normalize row " + std::to_string(r) + ": zero or non-finite norm");
    out.row(r) /= norm;
  }
  return out;
}

EmbeddingBank make_bank(const Matrix& embeddings) {
  return {normalize_rows(embeddings), true};
}

Assignment assign(const EmbeddingBank& bank, const CentroidMatrix& centroids) {
  require(bank.rows.cols() == centroids.dim(), ErrorKind::Contract,
          "embedding dim " + std::to_string(bank.rows.cols()) + " != centroid dim " +
              std::to_string(centroids.dim()));
  require(centroids.count() > 0, ErrorKind::Contract, "no centroids");
  const Matrix sim = bank.rows * centroids.columns;
  Assignment a;
  a.labels.resize(bank.rows.rows());
  double total = 0.0;
  for (Eigen::Index n = 0; n < sim.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < sim.cols(); ++k)
      if (sim(n, k) > sim(n, best)) best = k;
    a.labels[n] = static_cast<int>(best);
    total += sim(n, best);
  }
  a.objective = bank.rows.rows() ? -total / static_cast<double>(bank.rows.rows()) : 0.0;
  return a;
}

CentroidMatrix update_centroids(const EmbeddingBank& bank, const std::vector<int>& labels, int k,
                                Rng& rng) {
  const auto n = bank.rows.rows();
  const auto d = bank.rows.cols();
  require(static_cast<Eigen::Index>(labels.size()) == n, ErrorKind::Contract,
          "label count does not match bank size");
  require(k > 0, ErrorKind::Contract, "cluster count must be positive");
  Matrix sums = Matrix::Zero(d, k);
  std::vector<int> sizes(k, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[i];
    require(l >= 0 && l < k, ErrorKind::Contract, "label out of range: " + std::to_string(l));
    sums.col(l) += bank.rows.row(i).transpose();
    ++sizes[l];
  }

  CentroidMatrix c;
  c.columns.resize(d, k);
  std::vector<bool> empty(k, false);
  for (int j = 0; j < k; ++j) {
    const double norm = sums.col(j).norm();
    if (sizes[j] == 0 || norm == 0.0) {
      empty[j] = true;
      c.columns.col(j).setZero();
    } else {
      c.columns.col(j) = sums.col(j) / norm;
    }
  }
  if (std::none_of(empty.begin(), empty.end(), [](bool e) { return e; })) return c;

  // Cosine of every row to its own (non-empty) centroid.
  std::vector<double> own(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[i];
    own[i] = empty[l] ? -2.0 : bank.rows.row(i).dot(c.columns.col(l));
  }
  std::vector<bool> used(n, false);
  for (int j = 0; j < k; ++j) {
    if (!empty[j]) continue;
    double worst = 2.0;
    std::vector<Eigen::Index> ties;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (own[i] < worst) {
        worst = own[i];
        ties.assign(1, i);
      } else if (own[i] == worst) {
        ties.push_back(i);
      }
    }
    if (ties.empty()) {  // more empty clusters than rows; reuse row 0
      ties.push_back(0);
    }
    const auto pick = ties.size() == 1
                          ? ties[0]
                          : ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
    used[pick] = true;
    c.columns.col(j) = bank.rows.row(pick).transpose().normalized();
  }
  return c;
}

CentroidMatrix init_centroids(const EmbeddingBank& bank, int k, Rng& rng) {
  const auto n = bank.rows.rows();
  require(n >= k && k > 0, ErrorKind::Contract,
          "need at least K=" + std::to_string(k) + " rows, have " + std::to_string(n));
  CentroidMatrix c;
  c.columns.resize(bank.rows.cols(), k);
  auto first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  c.columns.col(0) = bank.rows.row(first).transpose();
  // Distance to the nearest chosen centroid, 1 - cos in [0, 2].
  Vector dist = (1.0 - (bank.rows * c.columns.col(0)).array()).matrix().cwiseMax(0.0);
  for (int j = 1; j < k; ++j) {
    const double total = dist.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (dist[i] <= 0.0) continue;
        u -= dist[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      while (dist[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    c.columns.col(j) = bank.rows.row(pick).transpose();
    const Vector d = (1.0 - (bank.rows * c.columns.col(j)).array()).matrix().cwiseMax(0.0);
    dist = dist.cwiseMin(d);
  }
  return c;
}

namespace {

// One pass of single-point moves ("first variation"). A point moves to the
// cluster that most lowers -sum_k |s_k| where s_k are member sums; moves
// that would empty a cluster are skipped. Returns true if anything moved.
bool first_variation(const EmbeddingBank& bank, std::vector<int>& labels, int k) {
  const auto d = bank.rows.cols();
  Matrix sums = Matrix::Zero(d, k);
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    sums.col(labels[n]) += bank.rows.row(static_cast<Eigen::Index>(n)).transpose();
    ++sizes[static_cast<std::size_t>(labels[n])];
  }
  Vector norms = sums.colwise().norm().transpose();
  constexpr double kMinGain = 1e-12;
  bool moved = false;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int from = labels[n];
    if (sizes[static_cast<std::size_t>(from)] <= 1) continue;
    const auto x = bank.rows.row(static_cast<Eigen::Index>(n)).transpose();
    const double leave = (sums.col(from) - x).norm() - norms(from);
    int best = from;
    double best_gain = kMinGain;
    for (int j = 0; j < k; ++j) {
      if (j == from) continue;
      const double gain = leave + (sums.col(j) + x).norm() - norms(j);
      if (gain > best_gain) {
        best_gain = gain;
        best = j;
      }
    }
    if (best == from) continue;
    sums.col(from) -= x;
    sums.col(best) += x;
    norms(from) = sums.col(from).norm();
    norms(best) = sums.col(best).norm();
    --sizes[static_cast<std::size_t>(from)];
    ++sizes[static_cast<std::size_t>(best)];
    labels[n] = best;
    moved = true;
  }
  return moved;
}

}  // namespace

ClusterResult spherical_kmeans(const EmbeddingBank& bank, int k, const KMeansOptions& opts, Rng& rng) {
  const auto n = bank.rows.rows();
  require(k > 0 && n >= k, ErrorKind::Contract,
          "spherical k-means needs N >= K (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");
  require(opts.restarts >= 1 && opts.max_iters >= 0, ErrorKind::Contract, "invalid k-means options");
  require(bank.row_norm, ErrorKind::Contract, "bank rows must be l2-normalized before clustering");

  ClusterResult best;
  bool have_best = false;
  for (int r = 0; r < opts.restarts; ++r) {
    CentroidMatrix c = init_centroids(bank, k, rng);
    Assignment a = assign(bank, c);
    std::vector<double> trace{a.objective};
    int it = 0;
    for (;;) {
      while (it < opts.max_iters) {
        ++it;
        c = update_centroids(bank, a.labels, k, rng);
        Assignment next = assign(bank, c);
        trace.push_back(next.objective);
        const bool stable = next.labels == a.labels;
        const bool stalled = a.objective - next.objective < opts.tol;
        a = std::move(next);
        if (stable || stalled) break;
      }
      // Lloyd is stuck; try escaping with single-point moves.
      if (it >= opts.max_iters || !first_variation(bank, a.labels, k)) break;
      ++it;
      c = update_centroids(bank, a.labels, k, rng);
      a = assign(bank, c);
      trace.push_back(a.objective);
    }
    if (!have_best || a.objective < best.objective) {
      best.labels = a.labels;
      best.centroids = c;
      best.objective = a.objective;
      best.iterations_run = it;
      best.restart = r;
      have_best = true;
    }
    best.objective_trace.push_back(std::move(trace));
  }
  return best;
}

double cluster_purity(const std::vector<int>& clusters, const std::vector<int>& truth) {
  require(clusters.size() == truth.size() && !clusters.empty(), ErrorKind::Contract,
          "purity needs aligned, non-empty label vectors");
  std::map<int, std::map<int, int>> counts;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++counts[clusters[i]][truth[i]];
  std::size_t majority_total = 0;
  for (const auto& [cluster, hist] : counts) {
    int top = 0;
    for (const auto& [label, count] : hist) top = std::max(top, count);
    majority_total += static_cast<std::size_t>(top);
  }
  return static_cast<double>(majority_total) / static_cast<double>(clusters.size());
}

}  // namespace sdaudio
