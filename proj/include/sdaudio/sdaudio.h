/* SPDX-License-Identifier: Apache-2.0
 * Copyright 2026 The sdaudio Authors
 *
 * C interface to the sdaudio library. Every function returns an sda_status;
 * on failure a human-readable message is available from
 * sda_last_error_message() on the calling thread.
 */
#ifndef SDAUDIO_SDAUDIO_H_
#define SDAUDIO_SDAUDIO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SDAUDIO_BUILDING_LIBRARY)
#define SDA_API __declspec(dllexport)
#else
#define SDA_API __declspec(dllimport)
#endif
#else
#define SDA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sda_status {
  SDA_OK = 0,
  SDA_ERR_IO = 1,
  SDA_ERR_FORMAT = 2,
  SDA_ERR_CONFIG = 3,
  SDA_ERR_CONTRACT = 4,
  SDA_ERR_STATE = 5,
  SDA_ERR_INTEGRITY = 6,
  SDA_ERR_DEGENERATE = 7,
  SDA_ERR_USAGE = 8,
  SDA_ERR_INTERNAL = 9
} sda_status;

typedef enum sda_profile {
  SDA_PROFILE_DEFAULT = 0, /* whatever the config file says, else desk */
  SDA_PROFILE_DESK = 1,
  SDA_PROFILE_PAPER = 2
} sda_profile;

/* Opaque handles. */
typedef struct sda_experiment sda_experiment;
typedef struct sda_checkpoint sda_checkpoint;

typedef struct sda_experiment_options {
  const char* config_path; /* NULL: profile defaults only */
  const char* run_dir;     /* required */
  const char* data_dir;    /* NULL: use the config's data source */
  sda_profile profile;
  int has_seed;            /* nonzero: seed overrides the config */
  uint64_t seed;
  int verbose;             /* nonzero: progress lines on stderr */
} sda_experiment_options;

typedef struct sda_eval_report {
  double accuracy;
  int32_t n_test;
  int32_t correct;
} sda_eval_report;

typedef struct sda_kmeans_options {
  int32_t max_iters; /* default 50 */
  double tol;        /* default 1e-6 */
  int32_t restarts;  /* default 3 */
} sda_kmeans_options;

SDA_API const char* sda_version(void);
SDA_API const char* sda_last_error_message(void);
SDA_API const char* sda_status_name(sda_status status);
SDA_API void sda_kmeans_options_init(sda_kmeans_options* opts);

/* Experiments: one handle per run directory. */
SDA_API sda_status sda_experiment_create(const sda_experiment_options* opts, sda_experiment** out);
SDA_API void sda_experiment_destroy(sda_experiment* exp);
SDA_API sda_status sda_experiment_pretrain(sda_experiment* exp);
SDA_API sda_status sda_experiment_pseudolabel(sda_experiment* exp);
SDA_API sda_status sda_experiment_distill(sda_experiment* exp);
SDA_API sda_status sda_experiment_eval(sda_experiment* exp, sda_eval_report* report);
SDA_API sda_status sda_experiment_pipeline(sda_experiment* exp, sda_eval_report* report);
/* Renders the report. *text is owned by the handle and valid until the next
 * call on it or its destruction. */
SDA_API sda_status sda_experiment_report(sda_experiment* exp, const char** text);
/* Fully resolved configuration as written into the run directory. */
SDA_API sda_status sda_experiment_resolved_config(sda_experiment* exp, const char** text);

/* Spherical k-means over n row-major d-dimensional rows. Rows are
 * l2-normalized internally. labels: n entries; centroids (optional): d*k,
 * column j of the centroid matrix stored contiguously at [j*d, (j+1)*d). */
SDA_API sda_status sda_spherical_kmeans(const double* rows, size_t n, size_t d, size_t k,
                                        const sda_kmeans_options* opts, uint64_t seed,
                                        int32_t* labels, double* centroids, double* objective,
                                        int32_t* iterations);

/* Checkpoints: load verifies the content hash. */
SDA_API sda_status sda_checkpoint_open(const char* path, sda_checkpoint** out);
SDA_API void sda_checkpoint_close(sda_checkpoint* ckpt);
/* 64 lowercase hex characters plus terminator. */
SDA_API sda_status sda_checkpoint_hash(const sda_checkpoint* ckpt, char out[65]);
SDA_API sda_status sda_checkpoint_blob_count(const sda_checkpoint* ckpt, size_t* count);
/* Returns the blob's name and shape; *name is owned by the handle. */
SDA_API sda_status sda_checkpoint_blob_info(const sda_checkpoint* ckpt, size_t index, const char** name,
                                            size_t* rows, size_t* cols);
/* NULL when the key is absent. */
SDA_API const char* sda_checkpoint_meta(const sda_checkpoint* ckpt, const char* key);

#ifdef __cplusplus
}
#endif

#endif /* SDAUDIO_SDAUDIO_H_ */
