#ifndef KOOPRED_H
#define KOOPRED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Identification method.
 */
typedef enum KrMethod {
  /**
   * Pseudoinverse least squares.
   */
  KR_METHOD_PINV = 1,
  /**
   * Sequentially thresholded least squares.
   */
  KR_METHOD_STLS = 2,
  /**
   * Sparse Bayesian learning.
   */
  KR_METHOD_SBL = 3,
  /**
   * Spike-and-slab variational Bayes.
   */
  KR_METHOD_SPIKE_SLAB = 4,
} KrMethod;

/**
 * Status code returned by every fallible function.
 */
typedef enum KrStatus {
  KR_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  KR_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or a buffer had the wrong length.
   */
  KR_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed, inconsistent or insufficient input data.
   */
  KR_STATUS_DATA = 3,
  /**
   * The numerical method failed (non-finite values, divergence).
   */
  KR_STATUS_NUMERIC = 4,
  /**
   * Bad configuration JSON or an impossible request.
   */
  KR_STATUS_CONFIG = 5,
  KR_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  KR_STATUS_PANIC = 7,
} KrStatus;

/**
 * Opaque trajectory: states, inputs and sampling period.
 */
typedef struct KrDataset KrDataset;

/**
 * Opaque identified model.
 */
typedef struct KrModel KrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *kr_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next `kr_*` call on the same thread.
 */
const char *kr_last_error(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a `kr_*` function that hands over string ownership.
 */
void kr_string_free(char *s);

/**
 * Build a dataset from row-major buffers: `states` is `n_rows × n_states`,
 * `inputs` is `(n_rows - 1) × n_inputs` (may be NULL when `n_inputs` is 0).
 *
 * # Safety
 * Buffers must hold the stated number of values; `out` must be writable.
 */
enum KrStatus kr_dataset_new(const double *states,
                             size_t n_rows,
                             size_t n_states,
                             const double *inputs,
                             size_t n_inputs,
                             double dt,
                             struct KrDataset **out);

/**
 * Read a dataset CSV: the first `n_states` columns are states, the next
 * `n_inputs` inputs.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KrStatus kr_dataset_load_csv(const char *path,
                                  size_t n_states,
                                  size_t n_inputs,
                                  struct KrDataset **out);

/**
 * Copy of `data` with Gaussian measurement noise at `snr_db` on every state.
 *
 * # Safety
 * `data` must be a live handle; `out` must be writable.
 */
enum KrStatus kr_dataset_add_noise(const struct KrDataset *data,
                                   double snr_db,
                                   uint64_t seed,
                                   struct KrDataset **out);

/**
 * Number of rows, states and inputs of a dataset. Any output may be NULL.
 *
 * # Safety
 * `data` must be a live handle.
 */
enum KrStatus kr_dataset_shape(const struct KrDataset *data,
                               size_t *n_rows,
                               size_t *n_states,
                               size_t *n_inputs);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void kr_dataset_free(struct KrDataset *data);

/**
 * Identify a model from `data`.
 *
 * `options_json` may be NULL or a JSON object with optional keys
 * `dictionary` (kernel template; identity observables when absent) and
 * `settings` (solver settings and priors). `seed` drives kernel placement.
 *
 * # Safety
 * `data` must be a live handle; `options_json` NULL or NUL-terminated;
 * `out` must be writable.
 */
enum KrStatus kr_fit(const struct KrDataset *data,
                     enum KrMethod method,
                     const char *options_json,
                     uint64_t seed,
                     struct KrModel **out);

/**
 * Prune the dictionary of a spike-and-slab model at `epsilon` and refit
 * `method` on the kept observables.
 *
 * # Safety
 * `model` and `data` must be live handles; `out` must be writable.
 */
enum KrStatus kr_fit_reduced(const struct KrModel *model,
                             const struct KrDataset *data,
                             double epsilon,
                             enum KrMethod method,
                             struct KrModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum KrStatus kr_model_load(const char *path, struct KrModel **out);

/**
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum KrStatus kr_model_from_json(const char *json, struct KrModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum KrStatus kr_model_save(const struct KrModel *model, const char *path);

/**
 * Serialize a model; release the string with [`kr_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum KrStatus kr_model_to_json(const struct KrModel *model, char **out);

/**
 * Dictionary size, input count and output count. Any output may be NULL.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum KrStatus kr_model_dims(const struct KrModel *model,
                            size_t *n_observables,
                            size_t *n_inputs,
                            size_t *n_outputs);

/**
 * Copy the `(observables + inputs) × observables` operator into `buf`.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `len` doubles.
 */
enum KrStatus kr_model_operator(const struct KrModel *model, double *buf, size_t len);

/**
 * Copy the inclusion-probability matrix (same shape as the operator).
 * Fails with `Config` for models from methods without one.
 *
 * # Safety
 * `model` must be a live handle; `buf` must hold `len` doubles.
 */
enum KrStatus kr_model_inclusion(const struct KrModel *model, double *buf, size_t len);

/**
 * Predict the outputs one step ahead from state `x` and input `u`.
 *
 * # Safety
 * `model` must be a live handle; buffers must hold the stated lengths.
 */
enum KrStatus kr_model_step(const struct KrModel *model,
                            const double *x,
                            size_t nx,
                            const double *u,
                            size_t nu,
                            double *y,
                            size_t ny);

/**
 * One-step NMSE per output on `data`, written to `nmse` (`n_outputs` values).
 *
 * # Safety
 * `model` and `data` must be live handles; `nmse` must hold `len` doubles.
 */
enum KrStatus kr_model_evaluate(const struct KrModel *model,
                                const struct KrDataset *data,
                                double *nmse,
                                size_t len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void kr_model_free(struct KrModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOOPRED_H */
