// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sdaudio Authors

#include "sdaudio/sdaudio.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "sdaudio/checkpoint.hpp"
#include "sdaudio/clustering.hpp"
#include "sdaudio/error.hpp"
#include "sdaudio/experiment.hpp"

struct sda_experiment {
  std::unique_ptr<sdaudio::Experiment> impl;
  std::string text;
};

struct sda_checkpoint {
  sdaudio::Checkpoint impl;
  std::string hash;
};

namespace {

thread_local std::string g_last_error;

sda_status status_for(sdaudio::ErrorKind kind) {
  using sdaudio::ErrorKind;
  switch (kind) {
    case ErrorKind::Io: return SDA_ERR_IO;
    case ErrorKind::Format: return SDA_ERR_FORMAT;
    case ErrorKind::Config: return SDA_ERR_CONFIG;
    case ErrorKind::Contract: return SDA_ERR_CONTRACT;
    case ErrorKind::State: return SDA_ERR_STATE;
    case ErrorKind::Integrity: return SDA_ERR_INTEGRITY;
    case ErrorKind::Degenerate: return SDA_ERR_DEGENERATE;
    case ErrorKind::Usage: return SDA_ERR_USAGE;
  }
  return SDA_ERR_INTERNAL;
}

template <class F>
sda_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return SDA_OK;
  } catch (const sdaudio::Error& e) {
    g_last_error = std::string(sdaudio::to_string(e.kind())) + ": " + e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SDA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return SDA_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "internal error: unknown exception";
    return SDA_ERR_INTERNAL;
  }
}

void require_arg(bool cond, const char* what) {
  sdaudio::require(cond, sdaudio::ErrorKind::Usage, what);
}

void fill(const sdaudio::EvalReport& r, sda_eval_report* out) {
  if (!out) return;
  out->accuracy = r.accuracy;
  out->n_test = r.n_test;
  out->correct = r.correct;
}

}  // namespace

extern "C" {

const char* sda_version(void) { return "1.0.0"; }

const char* sda_last_error_message(void) { return g_last_error.c_str(); }

const char* sda_status_name(sda_status status) {
  switch (status) {
    case SDA_OK: return "ok";
    case SDA_ERR_IO: return "io";
    case SDA_ERR_FORMAT: return "format";
    case SDA_ERR_CONFIG: return "config";
    case SDA_ERR_CONTRACT: return "contract";
    case SDA_ERR_STATE: return "state";
    case SDA_ERR_INTEGRITY: return "integrity";
    case SDA_ERR_DEGENERATE: return "degenerate";
    case SDA_ERR_USAGE: return "usage";
    case SDA_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void sda_kmeans_options_init(sda_kmeans_options* opts) {
  if (!opts) return;
  const sdaudio::KMeansOptions d;
  opts->max_iters = d.max_iters;
  opts->tol = d.tol;
  opts->restarts = d.restarts;
}

sda_status sda_experiment_create(const sda_experiment_options* opts, sda_experiment** out) {
  return guarded([&] {
    require_arg(opts && out, "options and output handle are required");
    require_arg(opts->run_dir && *opts->run_dir, "run_dir is required");
    *out = nullptr;
    sdaudio::ConfigOverrides ov;
    if (opts->profile == SDA_PROFILE_DESK) ov.profile = sdaudio::ScaleProfile::Desk;
    if (opts->profile == SDA_PROFILE_PAPER) ov.profile = sdaudio::ScaleProfile::Paper;
    if (opts->has_seed) ov.seed = opts->seed;
    if (opts->data_dir && *opts->data_dir) ov.data_dir = std::string(opts->data_dir);
    sdaudio::ExperimentConfig cfg = opts->config_path && *opts->config_path
                                        ? sdaudio::load_config(opts->config_path, ov)
                                        : sdaudio::parse_config("", ov);
    auto exp = std::make_unique<sda_experiment>();
    exp->impl = std::make_unique<sdaudio::Experiment>(std::move(cfg), opts->run_dir);
    exp->impl->set_verbose(opts->verbose != 0);
    *out = exp.release();
  });
}

void sda_experiment_destroy(sda_experiment* exp) { delete exp; }

sda_status sda_experiment_pretrain(sda_experiment* exp) {
  return guarded([&] {
    require_arg(exp, "null experiment handle");
    exp->impl->pretrain();
  });
}

sda_status sda_experiment_pseudolabel(sda_experiment* exp) {
  return guarded([&] {
    require_arg(exp, "null experiment handle");
    exp->impl->pseudolabel();
  });
}

sda_status sda_experiment_distill(sda_experiment* exp) {
  return guarded([&] {
    require_arg(exp, "null experiment handle");
    exp->impl->distill();
  });
}

sda_status sda_experiment_eval(sda_experiment* exp, sda_eval_report* report) {
  return guarded([&] {
    require_arg(exp, "null experiment handle");
    fill(exp->impl->eval(), report);
  });
}

sda_status sda_experiment_pipeline(sda_experiment* exp, sda_eval_report* report) {
  return guarded([&] {
    require_arg(exp, "null experiment handle");
    fill(exp->impl->pipeline(), report);
  });
}

sda_status sda_experiment_report(sda_experiment* exp, const char** text) {
  return guarded([&] {
    require_arg(exp && text, "null argument");
    exp->text = exp->impl->report();
    *text = exp->text.c_str();
  });
}

sda_status sda_experiment_resolved_config(sda_experiment* exp, const char** text) {
  return guarded([&] {
    require_arg(exp && text, "null argument");
    exp->text = exp->impl->config().to_yaml();
    *text = exp->text.c_str();
  });
}

sda_status sda_spherical_kmeans(const double* rows, size_t n, size_t d, size_t k,
                                const sda_kmeans_options* opts, uint64_t seed, int32_t* labels,
                                double* centroids, double* objective, int32_t* iterations) {
  return guarded([&] {
    require_arg(rows && labels, "rows and labels are required");
    require_arg(n > 0 && d > 0 && k > 0, "n, d and k must be positive");
    sdaudio::KMeansOptions o;
    if (opts) {
      o.max_iters = opts->max_iters;
      o.tol = opts->tol;
      o.restarts = opts->restarts;
    }
    sdaudio::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i * d + j];
    sdaudio::Rng rng = sdaudio::make_rng(seed, "c-api-kmeans");
    const auto r = sdaudio::spherical_kmeans(sdaudio::make_bank(m), static_cast<int>(k), o, rng);
    for (size_t i = 0; i < n; ++i) labels[i] = r.labels[i];
    if (centroids) std::memcpy(centroids, r.centroids.columns.data(), sizeof(double) * d * k);
    if (objective) *objective = r.objective;
    if (iterations) *iterations = r.iterations_run;
  });
}

sda_status sda_checkpoint_open(const char* path, sda_checkpoint** out) {
  return guarded([&] {
    require_arg(path && out, "path and output handle are required");
    *out = nullptr;
    auto c = std::make_unique<sda_checkpoint>();
    c->impl = sdaudio::read_checkpoint(path);
    c->hash = sdaudio::checkpoint_content_hash(path);
    *out = c.release();
  });
}

void sda_checkpoint_close(sda_checkpoint* ckpt) { delete ckpt; }

sda_status sda_checkpoint_hash(const sda_checkpoint* ckpt, char out[65]) {
  return guarded([&] {
    require_arg(ckpt && out, "null argument");
    std::memcpy(out, ckpt->hash.c_str(), 65);
  });
}

sda_status sda_checkpoint_blob_count(const sda_checkpoint* ckpt, size_t* count) {
  return guarded([&] {
    require_arg(ckpt && count, "null argument");
    *count = ckpt->impl.blobs.size();
  });
}

sda_status sda_checkpoint_blob_info(const sda_checkpoint* ckpt, size_t index, const char** name,
                                    size_t* rows, size_t* cols) {
  return guarded([&] {
    require_arg(ckpt, "null checkpoint handle");
    require_arg(index < ckpt->impl.blobs.size(), "blob index out of range");
    const auto& [n, m] = ckpt->impl.blobs[index];
    if (name) *name = n.c_str();
    if (rows) *rows = static_cast<size_t>(m.rows());
    if (cols) *cols = static_cast<size_t>(m.cols());
  });
}

const char* sda_checkpoint_meta(const sda_checkpoint* ckpt, const char* key) {
  if (!ckpt || !key) return nullptr;
  const auto it = ckpt->impl.meta.find(key);
  return it == ckpt->impl.meta.end() ? nullptr : it->second.c_str();
}

}  // extern "C"
