// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors
//
// sdaudio <pretrain|pseudolabel|distill|eval|pipeline|report> [flags]
//
// Exit codes: 0 success, 1 contract/state/config/io failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include "sdaudio/sdaudio.h"

namespace {

struct ExperimentDeleter {
  void operator()(sda_experiment* e) const { sda_experiment_destroy(e); }
};
using ExperimentHandle = std::unique_ptr<sda_experiment, ExperimentDeleter>;

int report_failure(sda_status status) {
  std::fprintf(stderr, "sdaudio: %s\n", sda_last_error_message());
  return status == SDA_ERR_USAGE ? 2 : 1;
}

void print_eval(const sda_eval_report& r) {
  std::printf("accuracy=%.6f correct=%d n_test=%d\n", r.accuracy, r.correct, r.n_test);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pre-training, pseudo-label self-distillation and linear evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sda_version()));

  std::string config_path, run_dir, data_dir, profile;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (key: value text)")->check(CLI::ExistingFile);
    sub->add_option("--profile", profile, "Scale profile")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--run-dir", run_dir, "Run directory holding every artifact")->required();
    sub->add_option("--data-dir", data_dir, "Directory of <class>/*.wav instead of synthetic data");
    sub->add_flag("--quiet", quiet, "No progress output");
  };
  const char* names[] = {"pretrain", "pseudolabel", "distill", "eval", "pipeline", "report"};
  const char* help[] = {"Self-supervised pre-training with clustering pseudo-labels",
                        "Cluster target data with the pre-trained encoder",
                        "Pseudo-label guided self-distillation of a fresh encoder",
                        "Linear probe on frozen student features",
                        "Run pretrain, pseudolabel, distill and eval in order",
                        "Render the metrics log as tables"};
  for (int i = 0; i < 6; ++i) add_common(app.add_subcommand(names[i], help[i]));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  sda_experiment_options opts{};
  opts.config_path = config_path.empty() ? nullptr : config_path.c_str();
  opts.run_dir = run_dir.c_str();
  opts.data_dir = data_dir.empty() ? nullptr : data_dir.c_str();
  opts.profile = profile == "paper" ? SDA_PROFILE_PAPER : profile == "desk" ? SDA_PROFILE_DESK : SDA_PROFILE_DEFAULT;
  opts.has_seed = seed.has_value();
  opts.seed = seed.value_or(0);
  opts.verbose = quiet ? 0 : 1;

  sda_experiment* raw = nullptr;
  if (sda_status s = sda_experiment_create(&opts, &raw); s != SDA_OK) return report_failure(s);
  ExperimentHandle exp(raw);

  sda_status s = SDA_OK;
  sda_eval_report report{};
  if (command == "pretrain") {
    s = sda_experiment_pretrain(exp.get());
  } else if (command == "pseudolabel") {
    s = sda_experiment_pseudolabel(exp.get());
  } else if (command == "distill") {
    s = sda_experiment_distill(exp.get());
  } else if (command == "eval") {
    s = sda_experiment_eval(exp.get(), &report);
    if (s == SDA_OK) print_eval(report);
  } else if (command == "pipeline") {
    s = sda_experiment_pipeline(exp.get(), &report);
    if (s == SDA_OK) print_eval(report);
  } else if (command == "report") {
    const char* text = nullptr;
    s = sda_experiment_report(exp.get(), &text);
    if (s == SDA_OK) std::fputs(text, stdout);
  }
  return s == SDA_OK ? 0 : report_failure(s);
}
