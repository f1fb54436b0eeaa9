#ifndef SUBMFL_H
#define SUBMFL_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Weight-selection rule for pruning.
typedef enum submfl_prune_mode {
  SUBMFL_PRUNE_MODE_QUANTILE = 0,
  SUBMFL_PRUNE_MODE_MAX_NORMALIZED = 1,
} submfl_prune_mode;

// Result of every fallible call.
typedef enum submfl_status {
  SUBMFL_STATUS_OK = 0,
  SUBMFL_STATUS_NULL_POINTER = 1,
  SUBMFL_STATUS_UTF8 = 2,
  SUBMFL_STATUS_INVALID_ARGUMENT = 3,
  SUBMFL_STATUS_CONFIG = 4,
  SUBMFL_STATUS_DATA = 5,
  SUBMFL_STATUS_RUNTIME = 6,
} submfl_status;

// A generated submodel cascade.
typedef struct submfl_cascade submfl_cascade;

// A loaded dataset.
typedef struct submfl_dataset submfl_dataset;

// A model handle: parameters plus the optional mask they were trained
// under and the checkpoint provenance.
typedef struct submfl_model submfl_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *submfl_version(void);

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread.
const char *submfl_last_error_message(void);

// Load a model checkpoint.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum submfl_status submfl_model_load(const char *path, struct submfl_model **out);

// Save a model handle as a checkpoint.
//
// # Safety
// `model` must be a live handle from this library; `path` a valid string.
enum submfl_status submfl_model_save(const struct submfl_model *model, const char *path);

// # Safety
// `model` must be a handle from this library, or null (a no-op).
void submfl_model_free(struct submfl_model *model);

// Total parameter count, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t submfl_model_param_count(const struct submfl_model *model);

// Percentage of exactly-zero parameters, or -1 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
double submfl_model_global_sparsity(const struct submfl_model *model);

// Load an IDX image/label pair.
//
// # Safety
// Both paths must be valid NUL-terminated strings; `out` a valid pointer.
enum submfl_status submfl_dataset_load_idx(const char *images_path,
                                           const char *labels_path,
                                           struct submfl_dataset **out);

// Deterministic synthetic blob dataset.
//
// # Safety
// `out` must be a valid pointer.
enum submfl_status submfl_dataset_synthetic(size_t samples,
                                            size_t classes,
                                            size_t dim,
                                            double separation,
                                            uint64_t seed,
                                            struct submfl_dataset **out);

// Sample count, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t submfl_dataset_len(const struct submfl_dataset *dataset);

// # Safety
// `dataset` must be a handle from this library, or null (a no-op).
void submfl_dataset_free(struct submfl_dataset *dataset);

// Mean loss and argmax accuracy of a model on a dataset.
//
// # Safety
// All handles must be live; the two output pointers must be valid.
enum submfl_status submfl_model_evaluate(const struct submfl_model *model,
                                         const struct submfl_dataset *dataset,
                                         double *out_loss,
                                         double *out_accuracy);

// Generate the nine-submodel cascade from a model.
//
// # Safety
// `model` must be a live handle; `out` a valid pointer.
enum submfl_status submfl_cascade_generate(const struct submfl_model *model,
                                           enum submfl_prune_mode mode,
                                           struct submfl_cascade **out);

// Number of submodels in the cascade (9), or 0 for a null handle.
//
// # Safety
// `cascade` must be null or a live handle.
size_t submfl_cascade_len(const struct submfl_cascade *cascade);

// Pruning threshold of submodel `index`.
//
// # Safety
// `cascade` must be a live handle; `out` a valid pointer.
enum submfl_status submfl_cascade_threshold(const struct submfl_cascade *cascade,
                                            size_t index,
                                            double *out);

// Global sparsity percentage of submodel `index`.
//
// # Safety
// `cascade` must be a live handle; `out` a valid pointer.
enum submfl_status submfl_cascade_global_sparsity(const struct submfl_cascade *cascade,
                                                  size_t index,
                                                  double *out);

// Copy submodel `index` out of the cascade as a standalone model handle.
//
// # Safety
// `cascade` must be a live handle; `out` a valid pointer.
enum submfl_status submfl_cascade_model(const struct submfl_cascade *cascade,
                                        size_t index,
                                        struct submfl_model **out);

// # Safety
// `cascade` must be a handle from this library, or null (a no-op).
void submfl_cascade_free(struct submfl_cascade *cascade);

// Run the full experiment from a config file, writing metrics CSVs, the
// summary, and per-stage checkpoints into the configured (or overridden)
// output directory.
//
// # Safety
// `config_path` must be a valid NUL-terminated string; `out_dir` may be
// null to keep the configured directory.
enum submfl_status submfl_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBMFL_H */
