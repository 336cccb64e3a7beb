// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include <Eigen/QR>
#include <limits>
#include <set>

#include "doctest.h"
#include "sdaudio/clustering.hpp"
#include "support.hpp"

using namespace sdaudio;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("normalize_rows") {
  Matrix m(1, 2);
  m << 3, 4;
  const Matrix u = normalize_rows(m);
  CHECK(u(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  const Matrix r = normalize_rows(gaussian(100, 16, 1));
  for (Eigen::Index i = 0; i < r.rows(); ++i) CHECK(std::abs(r.row(i).norm() - 1.0) <= 1e-9);
  CHECK((normalize_rows(r) - r).cwiseAbs().maxCoeff() <= 1e-12);

  Matrix z = gaussian(3, 4, 2);
  z.row(1).setZero();
  CHECK(sdtest::error_kind([&] { normalize_rows(z); }) == ErrorKind::Degenerate);
}

TEST_CASE("assign") {
  SUBCASE("a centroid assigns to itself") {
    CentroidMatrix c{normalize_rows(gaussian(5, 8, 3)).transpose()};
    const EmbeddingBank bank = make_bank(c.columns.col(3).transpose());
    const Assignment a = assign(bank, c);
    CHECK(a.labels == std::vector<int>{3});
    CHECK(a.objective == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("ties go to the lowest index") {
    CentroidMatrix c{Matrix::Zero(2, 2)};
    c.columns(0, 0) = 1.0;
    c.columns(0, 1) = -1.0;
    Matrix g(1, 2);
    g << 0.0, 1.0;
    CHECK(assign(make_bank(g), c).labels == std::vector<int>{0});
  }
  SUBCASE("matches a brute-force argmax") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Matrix g = normalize_rows(gaussian(6, 5, 100 + seed));
      CentroidMatrix c{normalize_rows(gaussian(2, 5, 200 + seed)).transpose()};
      const Assignment a = assign(make_bank(g), c);
      double obj = 0.0;
      for (Eigen::Index i = 0; i < 6; ++i) {
        int best = 0;
        double best_dot = -2.0;
        for (int k = 0; k < 2; ++k) {
          double dot = 0.0;
          for (Eigen::Index j = 0; j < 5; ++j) dot += g(i, j) * c.columns(j, k);
          if (dot > best_dot) {
            best_dot = dot;
            best = k;
          }
        }
        CHECK(a.labels[static_cast<std::size_t>(i)] == best);
        obj -= best_dot / 6.0;
      }
      CHECK(a.objective == doctest::Approx(obj).epsilon(1e-12));
    }
  }
  SUBCASE("dimension mismatch is a contract error") {
    CentroidMatrix c{Matrix::Identity(4, 2)};
    CHECK(sdtest::error_kind([&] { assign(make_bank(gaussian(3, 5, 1)), c); }) == ErrorKind::Contract);
  }
}

TEST_CASE("update_centroids") {
  Rng rng(1);
  SUBCASE("duplicates average to themselves") {
    Matrix g(2, 3);
    g << 0.0, 0.6, 0.8, 0.0, 0.6, 0.8;
    const CentroidMatrix c = update_centroids(make_bank(g), {0, 0}, 1, rng);
    CHECK((c.columns.col(0) - g.row(0).transpose()).norm() <= 1e-15);
  }
  SUBCASE("an empty cluster is reseeded onto a bank row") {
    const EmbeddingBank bank = make_bank(gaussian(10, 4, 5));
    const CentroidMatrix c = update_centroids(bank, std::vector<int>(10, 0), 2, rng);
    CHECK(c.columns.col(1).norm() == doctest::Approx(1.0).epsilon(1e-12));
    bool on_row = false;
    for (Eigen::Index i = 0; i < 10; ++i) on_row |= (bank.rows.row(i).transpose() - c.columns.col(1)).norm() < 1e-12;
    CHECK(on_row);
    // The reseed target is the row least similar to the single occupied centroid.
    const Vector dots = bank.rows * c.columns.col(0);
    Eigen::Index lowest;
    dots.minCoeff(&lowest);
    CHECK((bank.rows.row(lowest).transpose() - c.columns.col(1)).norm() < 1e-12);
  }
  SUBCASE("columns are normalized member means") {
    const EmbeddingBank bank = make_bank(gaussian(20, 8, 9));
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = (i * 7) % 3;
    const CentroidMatrix c = update_centroids(bank, labels, 3, rng);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> mean(8, 0.0);
      int members = 0;
      for (int i = 0; i < 20; ++i) {
        if (labels[static_cast<std::size_t>(i)] != k) continue;
        ++members;
        for (int j = 0; j < 8; ++j) mean[static_cast<std::size_t>(j)] += bank.rows(i, j);
      }
      double norm = 0.0;
      for (double& v : mean) {
        v /= members;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      for (int j = 0; j < 8; ++j) CHECK(std::abs(c.columns(j, k) - mean[static_cast<std::size_t>(j)] / norm) <= 1e-9);
    }
  }
}

TEST_CASE("spherical_kmeans") {
  const KMeansOptions opts;

  SUBCASE("N = K puts every point in its own cluster") {
    const EmbeddingBank bank = make_bank(gaussian(6, 10, 4));
    Rng rng(2);
    const ClusterResult r = spherical_kmeans(bank, 6, opts, rng);
    CHECK(std::set<int>(r.labels.begin(), r.labels.end()).size() == 6);
    CHECK(r.objective == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("two separated blobs are recovered") {
    Matrix g = gaussian(40, 6, 8) * 0.05;
    std::vector<int> truth(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      truth[static_cast<std::size_t>(i)] = i % 2;
      g(i, i % 2 == 0 ? 0 : 1) += 1.0;
    }
    const EmbeddingBank bank = make_bank(g);
    // Margin check on the construction itself.
    double worst_between = -1.0, worst_within = 2.0;
    for (Eigen::Index i = 0; i < 40; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        const double c = bank.rows.row(i).dot(bank.rows.row(j));
        if (i % 2 == j % 2) worst_within = std::min(worst_within, c);
        else worst_between = std::max(worst_between, c);
      }
    REQUIRE(worst_within - worst_between > 0.5);
    Rng rng(3);
    const ClusterResult r = spherical_kmeans(bank, 2, opts, rng);
    CHECK(cluster_purity(r.labels, truth) == 1.0);
  }
  SUBCASE("best restart reaches the exhaustive optimum") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const EmbeddingBank bank = make_bank(gaussian(6, 3, 1000 + seed));
      Rng rng(seed);
      const ClusterResult r = spherical_kmeans(bank, 2, opts, rng);
      hits += std::abs(r.objective - sdtest::exhaustive_two_cluster_optimum(bank.rows)) <= 1e-9;
    }
    CHECK(hits >= 95);
  }
  SUBCASE("objective never increases within a restart and labels end at a fixed point") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const EmbeddingBank bank = make_bank(gaussian(60, 5, 50 + seed));
      Rng rng(seed);
      const ClusterResult r = spherical_kmeans(bank, 4, opts, rng);
      REQUIRE(r.objective_trace.size() == 3);
      for (const auto& trace : r.objective_trace)
        for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
      if (r.iterations_run < opts.max_iters) CHECK(assign(bank, r.centroids).labels == r.labels);
      CHECK(r.objective == doctest::Approx(assign(bank, r.centroids).objective).epsilon(1e-12));
    }
  }
  SUBCASE("a common rotation changes nothing") {
    const Matrix g = normalize_rows(gaussian(50, 6, 77));
    const Matrix q = Eigen::HouseholderQR<Matrix>(gaussian(6, 6, 78)).householderQ();
    Rng r1(5), r2(5);
    const ClusterResult a = spherical_kmeans(make_bank(g), 3, opts, r1);
    const ClusterResult b = spherical_kmeans(make_bank(g * q), 3, opts, r2);
    CHECK(std::abs(a.objective - b.objective) <= 1e-9);
    CHECK(a.labels == b.labels);
  }
  SUBCASE("same inputs, same result") {
    const EmbeddingBank bank = make_bank(gaussian(30, 4, 12));
    Rng r1(9), r2(9);
    const ClusterResult a = spherical_kmeans(bank, 3, opts, r1);
    const ClusterResult b = spherical_kmeans(bank, 3, opts, r2);
    CHECK(a.labels == b.labels);
    CHECK(a.centroids.columns == b.centroids.columns);
    CHECK(a.objective == b.objective);
    CHECK(a.objective_trace == b.objective_trace);
  }
  SUBCASE("fewer points than clusters is a contract error") {
    Rng rng(1);
    CHECK(sdtest::error_kind([&] { spherical_kmeans(make_bank(gaussian(3, 4, 1)), 4, opts, rng); }) ==
          ErrorKind::Contract);
  }
}

TEST_CASE("cluster_purity") {
  CHECK(cluster_purity({0, 0, 1, 1}, {2, 2, 3, 3}) == 1.0);
  CHECK(cluster_purity({0, 0, 0, 0}, {0, 0, 1, 1}) == 0.5);
  CHECK(cluster_purity({1, 1, 1, 0}, {0, 0, 1, 1}) == 0.75);
}
