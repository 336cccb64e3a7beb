// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <vector>

#include "sdaudio/rng.hpp"
#include "sdaudio/types.hpp"

namespace sdaudio {

/// N x d embeddings, one per row.
struct EmbeddingBank {
  Matrix rows;
  bool row_norm = false;
};

/// d x K centroids, one per column, each unit-norm.
struct CentroidMatrix {
  Matrix columns;

  Eigen::Index dim() const { return columns.rows(); }
  Eigen::Index count() const { return columns.cols(); }
};

struct Assignment {
  std::vector<int> labels;
  double objective = 0.0;  // -(1/N) sum_n g_n . C[:, label_n]
};

struct ClusterResult {
  std::vector<int> labels;
  CentroidMatrix centroids;
  double objective = 0.0;
  int iterations_run = 0;
  int restart = 0;  // index of the winning restart
  /// Objective after every assignment step, one vector per restart.
  std::vector<std::vector<double>> objective_trace;
};

struct KMeansOptions {
  int max_iters = 50;
  double tol = 1e-6;
  int restarts = 3;
};

/// Scales every row to unit l2 norm. Throws ErrorKind::Degenerate on a zero row.
Matrix normalize_rows(const Matrix& m);

/// Builds a row-normalized bank.
EmbeddingBank make_bank(const Matrix& embeddings);

/// Cosine argmax per row; ties go to the lowest centroid index.
Assignment assign(const EmbeddingBank& bank, const CentroidMatrix& centroids);

/// Normalized member means. An empty cluster is reseeded to the bank row with
/// the lowest cosine to its own assigned centroid (rng breaks exact ties).
CentroidMatrix update_centroids(const EmbeddingBank& bank, const std::vector<int>& labels, int k,
                                Rng& rng);

/// k-means++ seeding on cosine distance (1 - cos).
CentroidMatrix init_centroids(const EmbeddingBank& bank, int k, Rng& rng);

/// Lloyd alternation on the unit sphere. When Lloyd stops, a pass of
/// improving single-point moves is tried and Lloyd resumes if any point
/// moved. Returns the best of `restarts` runs.
ClusterResult spherical_kmeans(const EmbeddingBank& bank, int k, const KMeansOptions& opts, Rng& rng);

/// Fraction of items whose cluster's majority true label equals their own.
double cluster_purity(const std::vector<int>& clusters, const std::vector<int>& truth);

}  // namespace sdaudio
