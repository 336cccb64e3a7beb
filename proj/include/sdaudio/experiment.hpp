// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sdaudio/config.hpp"
#include "sdaudio/probe.hpp"

namespace sdaudio {

/// Append-only line-delimited JSON log: {"stage","epoch","values",...}.
class MetricsLog {
 public:
  explicit MetricsLog(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const std::string& stage, int epoch,
              const std::vector<std::pair<std::string, double>>& values,
              const std::vector<std::pair<std::string, std::vector<int>>>& int_lists = {}) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Fixed artifact names inside a run directory.
namespace artifacts {
inline constexpr const char* kResolvedConfig = "config.resolved.yaml";
inline constexpr const char* kDataset = "dataset";
inline constexpr const char* kMetrics = "metrics.jsonl";
inline constexpr const char* kPretrainCheckpoint = "pretrain.ckpt";
inline constexpr const char* kPseudoLabels = "pseudo_labels.txt";
inline constexpr const char* kPseudoLabelManifest = "pseudo_labels.manifest";
inline constexpr const char* kDistillCheckpoint = "distill.ckpt";
inline constexpr const char* kProbeCheckpoint = "probe.ckpt";
inline constexpr const char* kEvalReport = "eval_report.json";
inline constexpr const char* kResults = "results.tsv";
inline constexpr const char* kReport = "report.txt";
}  // namespace artifacts

/// One run directory and the stages that read and write it. Stages hand off
/// only through files, so any suffix of the pipeline can be re-run alone.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::filesystem::path run_dir);

  void pretrain();
  void pseudolabel();
  void distill();
  EvalReport eval();
  EvalReport pipeline();
  /// Renders the metrics log and results table; also writes report.txt.
  std::string report() const;

  /// Progress lines on std::clog.
  void set_verbose(bool v) { verbose_ = v; }

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }

 private:
  LabeledDataset dataset();
  std::filesystem::path path(const char* name) const { return run_dir_ / name; }
  void require_artifact(const char* name, const char* producer) const;
  std::map<std::string, std::string> provenance(const std::string& stage, int epoch) const;

  ExperimentConfig cfg_;
  std::filesystem::path run_dir_;
  std::string config_hash_;
  MetricsLog metrics_;
  bool verbose_ = false;
};

/// Reads a pseudo-label file (one integer per line).
std::vector<int> read_pseudo_labels(const std::filesystem::path& path);

/// Center crops without noise, the view used for feature extraction.
std::vector<LogMelSpec> eval_views(const LabeledDataset& data, const std::vector<std::size_t>& idx,
                                   int crop_frames);

}  // namespace sdaudio
