// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/experiment.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sdaudio/checkpoint.hpp"
#include "sdaudio/error.hpp"
#include "sdaudio/matrix_io.hpp"

namespace sdaudio {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void MetricsLog::append(const std::string& stage, int epoch,
                        const std::vector<std::pair<std::string, double>>& values,
                        const std::vector<std::pair<std::string, std::vector<int>>>& int_lists) const {
  json j;
  j["stage"] = stage;
  j["epoch"] = epoch;
  json v = json::object();
  for (const auto& [k, x] : values) v[k] = x;
  j["values"] = v;
  for (const auto& [k, list] : int_lists) j[k] = list;
  std::ofstream out(path_, std::ios::app);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot append to " + path_.string());
  out << j.dump() << "\n";
}

std::vector<int> read_pseudo_labels(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      fail(ErrorKind::Format, "malformed pseudo-label line: " + line);
    }
  }
  return labels;
}

std::vector<LogMelSpec> eval_views(const LabeledDataset& data, const std::vector<std::size_t>& idx,
                                   int crop_frames) {
  AugmentationPolicy center{crop_frames, 0.0, false};
  Rng unused(0);
  std::vector<LogMelSpec> views;
  views.reserve(idx.size());
  for (auto i : idx) views.push_back(sample_and_augment(data.items[i].spec, center, unused));
  return views;
}

Experiment::Experiment(ExperimentConfig cfg, fs::path run_dir)
    : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)), metrics_(run_dir_ / artifacts::kMetrics) {
  cfg_.validate();
  std::error_code ec;
  fs::create_directories(run_dir_, ec);
  require(!ec && fs::is_directory(run_dir_), ErrorKind::Io,
          "cannot create run directory " + run_dir_.string());
  const std::string yaml = cfg_.to_yaml();
  config_hash_ = sha256_hex(yaml);
  write_file(path(artifacts::kResolvedConfig), yaml);
}

void Experiment::require_artifact(const char* name, const char* producer) const {
  require(fs::exists(path(name)), ErrorKind::State,
          std::string("missing artifact ") + path(name).string() + " (run '" + producer + "' first)");
}

std::map<std::string, std::string> Experiment::provenance(const std::string& stage, int epoch) const {
  return {{"provenance.stage", stage},
          {"provenance.epoch", std::to_string(epoch)},
          {"provenance.config_sha256", config_hash_},
          {"provenance.seed", std::to_string(cfg_.seed)}};
}

LabeledDataset Experiment::dataset() {
  const fs::path dir = path(artifacts::kDataset);
  if (!fs::exists(dir / "manifest.txt")) {
    LabeledDataset fresh =
        cfg_.data.source == "directory"
            ? load_wav_directory(cfg_.data.dir, cfg_.data.features)
            : generate_synthetic_dataset(cfg_.data.classes, cfg_.data.per_class,
                                         derive_seed(cfg_.seed, "data"), cfg_.data.features,
                                         cfg_.data.clip_seconds);
    save_dataset(fresh, dir);
  }
  LabeledDataset data = load_dataset(dir);
  require(!data.items.empty(), ErrorKind::Contract, "dataset is empty");
  cfg_.encoder.class_count = data.class_count;
  return data;
}

void Experiment::pretrain() {
  const LabeledDataset data = dataset();
  std::vector<LogMelSpec> specs;
  specs.reserve(data.size());
  for (const auto& item : data.items) specs.push_back(item.spec);

  PretrainHooks hooks;
  hooks.on_epoch = [&](const PretrainEpoch& e) {
    metrics_.append("pretrain", e.epoch,
                    {{"loss", e.mean_loss}, {"kmeans_objective", e.kmeans_objective}},
                    {{"cluster_sizes", e.cluster_sizes}});
    if (verbose_)
      std::clog << "[pretrain] epoch " << e.epoch << "/" << cfg_.pretrain.epochs << " loss=" << e.mean_loss
                << " objective=" << e.kmeans_objective << std::endl;
  };
  const PretrainResult res =
      run_pretraining(cfg_.pretrain, cfg_.encoder, specs, derive_seed(cfg_.seed, "pretrain"), hooks);
  save_checkpoint(res.params, provenance("pretrain", cfg_.pretrain.epochs),
                  path(artifacts::kPretrainCheckpoint));
}

void Experiment::pseudolabel() {
  require_artifact(artifacts::kPretrainCheckpoint, "pretrain");
  const LabeledDataset data = dataset();
  const EncoderParams pre = load_checkpoint(path(artifacts::kPretrainCheckpoint), cfg_.encoder);
  const auto idx = data.indices(Split::Train);
  std::vector<int> truth;
  bool have_truth = true;
  for (auto i : idx) {
    if (!data.items[i].label) have_truth = false;
    truth.push_back(data.items[i].label.value_or(-1));
  }
  const auto views = eval_views(data, idx, cfg_.encoder.input_frames);
  const PseudoLabels pl =
      generate_pseudo_labels(pre, views, data.class_count, cfg_.pseudolabel_kmeans,
                             derive_seed(cfg_.seed, "pseudolabel"), have_truth ? &truth : nullptr);

  std::ostringstream labels;
  for (int l : pl.labels) labels << l << "\n";
  write_file(path(artifacts::kPseudoLabels), labels.str());
  std::ostringstream manifest;
  manifest << std::setprecision(17) << "format=sdaudio-pseudo-labels-v1\n"
           << "source_checkpoint=" << artifacts::kPretrainCheckpoint << "\n"
           << "source_sha256=" << checkpoint_content_hash(path(artifacts::kPretrainCheckpoint)) << "\n"
           << "clusters=" << data.class_count << "\n"
           << "count=" << pl.labels.size() << "\n"
           << "split=train\n"
           << "purity=" << pl.purity << "\n"
           << "kmeans_objective=" << pl.objective << "\n";
  write_file(path(artifacts::kPseudoLabelManifest), manifest.str());
  metrics_.append("pseudolabel", 0, {{"purity", pl.purity}, {"kmeans_objective", pl.objective}});
  if (verbose_) std::clog << "[pseudolabel] purity=" << pl.purity << std::endl;
}

void Experiment::distill() {
  require_artifact(artifacts::kPseudoLabels, "pseudolabel");
  const LabeledDataset data = dataset();
  const auto idx = data.indices(Split::Train);
  const std::vector<int> labels = read_pseudo_labels(path(artifacts::kPseudoLabels));
  require(labels.size() == idx.size(), ErrorKind::State,
          "pseudo-label count " + std::to_string(labels.size()) + " does not match the " +
              std::to_string(idx.size()) + " training items");
  std::vector<LogMelSpec> specs;
  for (auto i : idx) specs.push_back(data.items[i].spec);

  DistillHooks hooks;
  hooks.on_epoch = [&](int epoch, const LossBreakdown& b) {
    metrics_.append("distill", epoch, b.named());
    if (verbose_)
      std::clog << "[distill] epoch " << epoch << "/" << cfg_.distill.epochs << " L_all=" << b.total
                << std::endl;
  };
  const DistillResult res =
      run_distillation(cfg_.distill, cfg_.encoder, specs, labels, derive_seed(cfg_.seed, "distill"), hooks);

  const auto student = count_parameters(res.params, ParamSubset::Student);
  const auto full = count_parameters(res.params, ParamSubset::Full);
  metrics_.append("structure", 0,
                  {{"student_params", static_cast<double>(student)},
                   {"full_params", static_cast<double>(full)},
                   {"student_full_ratio", static_cast<double>(student) / static_cast<double>(full)}});
  save_checkpoint(res.params, provenance("distill", cfg_.distill.epochs), path(artifacts::kDistillCheckpoint));
}

EvalReport Experiment::eval() {
  require_artifact(artifacts::kDistillCheckpoint, "distill");
  const LabeledDataset data = dataset();
  const EncoderParams sd = load_checkpoint(path(artifacts::kDistillCheckpoint), cfg_.encoder);
  const auto train_idx = data.indices(Split::Train);
  const auto test_idx = data.indices(Split::Test);
  require(!test_idx.empty(), ErrorKind::Contract, "dataset has no test split");

  const Matrix train_x = extract_frozen_features(sd, eval_views(data, train_idx, cfg_.encoder.input_frames));
  const Matrix test_x = extract_frozen_features(sd, eval_views(data, test_idx, cfg_.encoder.input_frames));
  const LinearProbe probe = train_linear_probe(train_x, data.labels(train_idx), data.class_count, cfg_.probe,
                                               derive_seed(cfg_.seed, "probe"));
  EvalReport report = evaluate(probe, test_x, data.labels(test_idx));
  report.encoder_id = checkpoint_content_hash(path(artifacts::kDistillCheckpoint));
  report.probe = cfg_.probe;

  Checkpoint pc;
  pc.meta = provenance("eval", cfg_.probe.epochs);
  pc.meta["probe.encoder_sha256"] = report.encoder_id;
  pc.blobs = {{"probe.weight", probe.weight},
              {"probe.bias", probe.bias},
              {"probe.feature_mean", probe.mean},
              {"probe.feature_scale", probe.scale}};
  write_checkpoint(pc, path(artifacts::kProbeCheckpoint));
  write_file(path(artifacts::kEvalReport), report.to_json() + "\n");

  const bool fresh = !fs::exists(path(artifacts::kResults));
  std::ofstream results(path(artifacts::kResults), std::ios::app);
  require(static_cast<bool>(results), ErrorKind::Io, "cannot append to results table");
  if (fresh) results << "encoder_id\tprofile\tseed\tn_test\tcorrect\taccuracy\n";
  results << std::setprecision(17) << report.encoder_id << "\t" << to_string(cfg_.profile) << "\t"
          << cfg_.seed << "\t" << report.n_test << "\t" << report.correct << "\t" << report.accuracy << "\n";

  metrics_.append("eval", 0, {{"accuracy", report.accuracy}, {"n_test", static_cast<double>(report.n_test)}});
  if (verbose_) std::clog << "[eval] accuracy=" << report.accuracy << std::endl;
  return report;
}

EvalReport Experiment::pipeline() {
  pretrain();
  pseudolabel();
  distill();
  return eval();
}

std::string Experiment::report() const {
  require(fs::exists(metrics_.path()), ErrorKind::State,
          "missing artifact " + metrics_.path().string() + " (nothing has run yet)");
  std::istringstream in(read_file(metrics_.path()));
  struct Table {
    std::vector<std::string> columns;
    std::vector<std::pair<int, json>> rows;
  };
  std::vector<std::pair<std::string, Table>> tables;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorKind::Format, "malformed metrics line: " + line);
    }
    const auto stage = j.at("stage").get<std::string>();
    auto it = std::find_if(tables.begin(), tables.end(), [&](const auto& t) { return t.first == stage; });
    if (it == tables.end()) {
      tables.emplace_back(stage, Table{});
      it = std::prev(tables.end());
    }
    for (const auto& [k, v] : j.at("values").items())
      if (std::find(it->second.columns.begin(), it->second.columns.end(), k) == it->second.columns.end())
        it->second.columns.push_back(k);
    it->second.rows.emplace_back(j.at("epoch").get<int>(), j.at("values"));
  }

  std::ostringstream out;
  out << std::setprecision(6);
  for (const auto& [stage, table] : tables) {
    out << "## " << stage << "\n\n| epoch |";
    for (const auto& c : table.columns) out << " " << c << " |";
    out << "\n|---|";
    for (std::size_t i = 0; i < table.columns.size(); ++i) out << "---|";
    out << "\n";
    for (const auto& [epoch, values] : table.rows) {
      out << "| " << epoch << " |";
      for (const auto& c : table.columns) {
        if (values.contains(c) && values[c].is_number())
          out << " " << values[c].get<double>() << " |";
        else
          out << " - |";
      }
      out << "\n";
    }
    out << "\n";
  }
  if (fs::exists(path(artifacts::kResults))) out << "## results\n\n" << read_file(path(artifacts::kResults));
  const std::string text = out.str();
  write_file(path(artifacts::kReport), text);
  return text;
}

}  // namespace sdaudio
