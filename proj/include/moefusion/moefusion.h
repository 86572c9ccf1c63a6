/* Copyright 2026 The moefusion Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

/* C interface to the moefusion library. All functions are safe to call from
 * C; handles are opaque and must be released with the matching destroy call.
 * On failure a function returns a status other than MF_OK and the message is
 * available from mf_last_error() on the calling thread. */
#ifndef MOEFUSION_MOEFUSION_H_
#define MOEFUSION_MOEFUSION_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MF_API __declspec(dllexport)
#else
#define MF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mf_status {
  MF_OK = 0,
  MF_ERR_INVALID_ARGUMENT = 1,
  MF_ERR_SHAPE = 2,
  MF_ERR_IO = 3,
  MF_ERR_FORMAT = 4,
  MF_ERR_RESOLUTION = 5,
  MF_ERR_NUMERIC = 6,
  MF_ERR_INTERNAL = 7,
  /* The operation ran but its check did not pass (gradcheck). */
  MF_ERR_CHECK_FAILED = 8
} mf_status;

typedef struct mf_config mf_config;
typedef struct mf_model mf_model;

/* Receives one line of progress or warning text (no trailing newline). */
typedef void (*mf_message_fn)(const char* line, void* user);

MF_API const char* mf_version(void);
MF_API const char* mf_status_name(mf_status status);
/* Message of the last failure on this thread; "" when none. */
MF_API const char* mf_last_error(void);

/* Copies `text` into buf when it fits (NUL included); *needed receives the
 * required size either way. Used by every string-returning call below. */

MF_API mf_status mf_config_create(mf_config** out);
MF_API void mf_config_destroy(mf_config* config);
MF_API mf_status mf_config_merge_file(mf_config* config, const char* path);
MF_API mf_status mf_config_set(mf_config* config, const char* key, const char* value);
MF_API mf_status mf_config_get(const mf_config* config, const char* key, char* buf, size_t cap,
                               size_t* needed);
MF_API mf_status mf_config_to_text(const mf_config* config, char* buf, size_t cap,
                                   size_t* needed);

/* Fresh model initialised from config and its seed. */
MF_API mf_status mf_model_create(const mf_config* config, mf_model** out);
MF_API mf_status mf_model_load(const char* checkpoint_path, mf_model** out);
MF_API mf_status mf_model_save(const mf_model* model, const char* checkpoint_path);
MF_API void mf_model_destroy(mf_model* model);
/* Copy of the model's configuration; release with mf_config_destroy. */
MF_API mf_status mf_model_config(const mf_model* model, mf_config** out);
MF_API uint64_t mf_model_step(const mf_model* model);
/* Changes only the training schedule (epochs, steps) of a model. */
MF_API mf_status mf_model_set_schedule(mf_model* model, size_t epochs, size_t steps);

/* Writes `count` synthetic scenes (vis_NNN.ppm, ir_NNN.pgm, boxes_NNN.txt and
 * the manifest pairs.txt) at the configured resolution and seed. */
MF_API mf_status mf_synth(const mf_config* config, const char* out_dir, size_t count);

/* Continues training from the model's current step to the end of its
 * schedule. `pairs_manifest` may be NULL to use the seeded synthetic corpus
 * of config.train_pairs scenes. Writes checkpoint.bin, train_log.csv and
 * importance.csv into out_dir. `progress` may be NULL. */
MF_API mf_status mf_train(mf_model* model, const char* pairs_manifest, const char* out_dir,
                          mf_message_fn progress, void* user);

/* Fuses one pair. Writes an 8-bit graymap, or with color != 0 the pixmap
 * obtained by transplanting the visible chroma. Nothing is written on error. */
MF_API mf_status mf_fuse_files(mf_model* model, const char* visible_path,
                               const char* infrared_path, const char* out_path, int color);

/* Metric report for a manifest of "visible infrared fused [boxes]" lines.
 * With regions != 0 foreground/background rows are added per pair. */
MF_API mf_status mf_eval(const char* manifest_path, const char* out_csv, int regions);

/* Finite-difference audit of "autodiff-core", "gating", "fusion-net" or
 * "losses". Returns MF_ERR_CHECK_FAILED when a case exceeds its threshold.
 * The per-case report text is delivered through `report` (may be NULL). */
MF_API mf_status mf_gradcheck(const char* module, uint64_t seed, double* worst_rel_error,
                              mf_message_fn report, void* user);

/* Trains each "E<N>K<K>" entry of `grid` (comma separated) from `config` on
 * the same synthetic corpus and writes one CSV row of held-out metrics per
 * entry. Invalid entries are skipped and reported through `warn`. */
MF_API mf_status mf_sweep(const mf_config* config, const char* grid, const char* out_csv,
                          mf_message_fn warn, void* user);

#ifdef __cplusplus
}
#endif

#endif /* MOEFUSION_MOEFUSION_H_ */
