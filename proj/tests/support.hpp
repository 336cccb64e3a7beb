// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors
//
// Independent reference computations used by the tests. Nothing here calls
// the routine it is meant to check.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sdaudio/encoder.hpp"
#include "sdaudio/error.hpp"
#include "sdaudio/rng.hpp"
#include "sdaudio/types.hpp"

namespace sdtest {

using sdaudio::Matrix;
using sdaudio::Vector;

inline constexpr double kPi = std::numbers::pi;

// ---- audio ---------------------------------------------------------------

inline std::vector<float> sine(double hz, double amp, int rate, int n, double phase = 0.0) {
  std::vector<float> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    x[static_cast<std::size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * i / rate + phase));
  return x;
}

/// |X(f)|^2 of x at an arbitrary frequency, straight from the DFT sum.
inline double dft_power(const std::vector<float>& x, double hz, int rate) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += static_cast<double>(x[i]) * std::polar(1.0, -2.0 * kPi * hz * static_cast<double>(i) / rate);
  return std::norm(acc);
}

/// Frequency with the largest DFT power on a grid over [lo, hi].
inline double dominant_frequency(const std::vector<float>& x, int rate, double lo, double hi,
                                 double step) {
  double best_f = lo, best_p = -1.0;
  for (double f = lo; f <= hi; f += step) {
    const double p = dft_power(x, f, rate);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

/// One log-mel frame computed with an O(N^2) DFT and a filterbank built
/// here from the HTK mel formula.
inline std::vector<double> logmel_frame(const std::vector<float>& x, std::size_t start, int window,
                                        int n_fft, int rate, int mel_bins, double f_min,
                                        double f_max, double floor) {
  auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> frame(static_cast<std::size_t>(n_fft), 0.0);
  for (int i = 0; i < window; ++i) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * kPi * i / window));
    frame[static_cast<std::size_t>(i)] = x[start + static_cast<std::size_t>(i)] * w;
  }
  const int bins = n_fft / 2 + 1;
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < n_fft; ++i)
      acc += frame[static_cast<std::size_t>(i)] * std::polar(1.0, -2.0 * kPi * k * i / n_fft);
    power[static_cast<std::size_t>(k)] = std::norm(acc);
  }
  std::vector<double> out(static_cast<std::size_t>(mel_bins));
  const double lo = to_mel(f_min), hi = to_mel(f_max);
  for (int m = 0; m < mel_bins; ++m) {
    const double a = to_hz(lo + (hi - lo) * m / (mel_bins + 1));
    const double b = to_hz(lo + (hi - lo) * (m + 1) / (mel_bins + 1));
    const double c = to_hz(lo + (hi - lo) * (m + 2) / (mel_bins + 1));
    double e = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / n_fft;
      const double w = std::max(0.0, std::min((f - a) / (b - a), (c - f) / (c - b)));
      e += w * power[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(m)] = std::log(e + floor);
  }
  return out;
}

// ---- encoder ---------------------------------------------------------------

/// Conv weights and biases, blocks [0, blocks).
inline std::int64_t conv_parameter_count(const sdaudio::EncoderConfig& cfg, int blocks) {
  std::int64_t total = 0, in = 1;
  for (int i = 0; i < blocks; ++i) {
    const std::int64_t out = cfg.block_channels[static_cast<std::size_t>(i)];
    total += out * in * 9 + out;
    in = out;
  }
  return total;
}

inline std::int64_t all_parameter_count(const sdaudio::EncoderConfig& cfg) {
  const std::int64_t d4 = cfg.final_dim(), h = cfg.proj_hidden, p = cfg.proj_out,
                     k = cfg.prototype_count, t = cfg.class_count;
  std::int64_t total = conv_parameter_count(cfg, 4);
  total += d4 * h + h + h * p + p;  // projector
  total += k * p;                   // prototypes, no bias
  total += d4 * t + t;              // classifier
  for (int i = 0; i < 3; ++i) total += cfg.feature_dim(i) * d4 + d4 + d4 * t + t;
  return total;
}

inline sdaudio::LogMelSpec random_spec(sdaudio::Rng& rng, int frames = 96, int mel = 64) {
  std::normal_distribution<double> n(0.0, 1.0);
  sdaudio::LogMelSpec s;
  s.values.resize(frames, mel);
  for (Eigen::Index c = 0; c < s.values.cols(); ++c)
    for (Eigen::Index r = 0; r < s.values.rows(); ++r) s.values(r, c) = n(rng);
  return s;
}

inline std::vector<sdaudio::LogMelSpec> random_batch(std::size_t n, std::uint64_t seed) {
  sdaudio::Rng rng(seed);
  std::vector<sdaudio::LogMelSpec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_spec(rng));
  return out;
}

struct GradSample {
  std::string tensor;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from dominating through round-off.
inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Central differences on `per_tensor` random coordinates of every tensor
/// whose name passes `select`.
inline std::vector<GradSample> finite_differences(
    const sdaudio::EncoderParams& at, const sdaudio::EncoderParams& grads,
    const std::function<double(const sdaudio::EncoderParams&)>& loss,
    const std::function<bool(const std::string&)>& select, int per_tensor, std::uint64_t seed,
    double h = 1e-4) {
  std::vector<GradSample> out;
  std::vector<std::pair<std::string, Eigen::Index>> picks;
  std::mt19937_64 rng(seed);
  at.for_each([&](const std::string& name, const auto& t) {
    if (!select(name) || t.size() == 0) return;
    std::uniform_int_distribution<Eigen::Index> pick(0, t.size() - 1);
    for (int j = 0; j < per_tensor; ++j) picks.emplace_back(name, pick(rng));
  });
  for (const auto& [name, idx] : picks) {
    GradSample s{name, idx, 0.0, 0.0};
    grads.for_each([&](const std::string& n, const auto& t) {
      if (n == name) s.analytic = t.data()[idx];
    });
    auto shifted = [&](double delta) {
      sdaudio::EncoderParams p = at;
      p.for_each([&](const std::string& n, auto& t) {
        if (n == name) t.data()[idx] += delta;
      });
      return loss(p);
    };
    s.numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
    out.push_back(s);
  }
  return out;
}

/// Kind of the sdaudio::Error thrown by `f`, or nullopt when nothing is thrown.
template <class F>
std::optional<sdaudio::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const sdaudio::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sdaudio-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Global optimum of the K=2 objective by enumerating every labeling. For a
// fixed partition the best unit centroid is the normalized member sum, so
// the objective is -(|s_0| + |s_1|) / N.
inline double exhaustive_two_cluster_optimum(const sdaudio::Matrix& unit_rows) {
  const auto n = unit_rows.rows();
  double best = std::numeric_limits<double>::infinity();
  for (long mask = 0; mask < (1L << n); ++mask) {
    sdaudio::Vector s0 = sdaudio::Vector::Zero(unit_rows.cols()), s1 = s0;
    for (Eigen::Index i = 0; i < n; ++i) ((mask >> i) & 1 ? s1 : s0) += unit_rows.row(i).transpose();
    best = std::min(best, -(s0.norm() + s1.norm()) / static_cast<double>(n));
  }
  return best;
}

// Loss terms recomputed from the forward features with explicit formulas.
// `teacher_p` and `target` stand in for the detached quantities; when empty
// they are taken from the current forward pass.
struct Terms {
  double ce = 0.0;
  std::array<double, 3> aux_ce{}, kl{}, mse{};
};

inline Terms distill_terms(const sdaudio::EncoderParams& p, std::span<const sdaudio::LogMelSpec> batch,
                           const std::vector<int>& y, sdaudio::Matrix teacher_p = {}, sdaudio::Matrix target = {}) {
  const sdaudio::BlockFeatures f = sdaudio::forward(p, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  auto probs = [](const sdaudio::Matrix& logits) {
    sdaudio::Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double m = logits.row(r).maxCoeff();
      double z = 0.0;
      for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - m);
      for (Eigen::Index c = 0; c < logits.cols(); ++c) out(r, c) = std::exp(logits(r, c) - m) / z;
    }
    return out;
  };
  const sdaudio::Matrix l = sdaudio::apply_head(p, sdaudio::Head::Classifier, f.final()).output;
  const sdaudio::Matrix pl = probs(l);
  if (teacher_p.size() == 0) teacher_p = pl;
  if (target.size() == 0) target = f.final();
  Terms t;
  for (Eigen::Index r = 0; r < n; ++r) t.ce -= std::log(pl(r, y[static_cast<std::size_t>(r)])) / static_cast<double>(n);
  const sdaudio::Head heads[] = {sdaudio::Head::Aux1, sdaudio::Head::Aux2, sdaudio::Head::Aux3};
  for (int i = 0; i < 3; ++i) {
    const sdaudio::HeadOutput h = sdaudio::apply_head(p, heads[i], f.pooled[i]);
    const sdaudio::Matrix q = probs(h.output);
    for (Eigen::Index r = 0; r < n; ++r) {
      t.aux_ce[i] -= std::log(q(r, y[static_cast<std::size_t>(r)])) / static_cast<double>(n);
      for (Eigen::Index c = 0; c < q.cols(); ++c)
        t.kl[i] += teacher_p(r, c) * std::log(teacher_p(r, c) / q(r, c)) / static_cast<double>(n);
    }
    t.mse[i] = (h.adapter - target).array().square().mean();
  }
  return t;
}

inline double recompose(const Terms& t, double alpha, double beta) {
  double total = t.ce;
  for (int i = 0; i < 3; ++i) total += alpha * t.aux_ce[i] + (1.0 - alpha) * t.kl[i] + beta * t.mse[i];
  return total;
}

}  // namespace sdtest
