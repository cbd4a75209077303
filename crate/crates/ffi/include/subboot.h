#ifndef SUBBOOT_H
#define SUBBOOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SubbootStatus {
  SUBBOOT_STATUS_OK = 0,
  SUBBOOT_STATUS_NULL_POINTER = 1,
  SUBBOOT_STATUS_INVALID_ARGUMENT = 2,
  SUBBOOT_STATUS_INVALID_DATA = 3,
  SUBBOOT_STATUS_DEGENERATE = 4,
  SUBBOOT_STATUS_DATA_QUALITY = 5,
  SUBBOOT_STATUS_INFEASIBLE_BUDGET = 6,
  SUBBOOT_STATUS_CALIBRATION_FAILED = 7,
  SUBBOOT_STATUS_CONTRACT = 8,
  SUBBOOT_STATUS_IO = 9,
  SUBBOOT_STATUS_UNKNOWN_NAME = 10,
  SUBBOOT_STATUS_BUFFER_TOO_SMALL = 11,
  SUBBOOT_STATUS_PANIC = 12,
} SubbootStatus;

typedef enum SubbootMethod {
  SUBBOOT_METHOD_AF = 0,
  SUBBOOT_METHOD_TB = 1,
  SUBBOOT_METHOD_BLB = 2,
  SUBBOOT_METHOD_SB = 3,
  SUBBOOT_METHOD_SDB = 4,
} SubbootMethod;

// Opaque dataset handle.
typedef struct SubbootDataset SubbootDataset;

// Opaque estimator handle bound to a dataset's column layout.
typedef struct SubbootEstimator SubbootEstimator;

// Summary of one engine run.
typedef struct SubbootRunInfo {
  size_t dim;
  size_t n;
  size_t r;
  size_t b;
  size_t skipped;
  size_t attempted;
  double seconds;
} SubbootRunInfo;

typedef struct SubbootConstants {
  double c1;
  double c2;
  double c3;
  double c4;
} SubbootConstants;

// Moment constants of an estimator on a dataset. `tilde_valid` is 0 when
// the kurtosis is degenerate and the tilde constants are unavailable.
typedef struct SubbootMoments {
  size_t p;
  struct SubbootConstants c;
  double tilde_c1;
  double tilde_c2;
  double tilde_c3;
  int32_t tilde_valid;
} SubbootMoments;

typedef struct SubbootMsePrediction {
  double total;
  double full;
  double resample;
  double subsample_replicate;
  double subsample_size;
  double replicate;
  double cross;
} SubbootMsePrediction;

typedef struct SubbootTuned {
  size_t n;
  size_t r;
  size_t b;
  double objective;
  double predicted_time;
  double budget_slack;
  // Number of asymptotic-regime warnings raised by the tuner.
  size_t warnings;
} SubbootTuned;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *subboot_last_error(void);

// Library version as a static NUL-terminated string.
const char *subboot_version(void);

// Copies a row-major `rows`×`cols` matrix into a new dataset. `names` may be
// null (columns become x0, x1, ...) or point to `cols` strings.
//
// # Safety
// `values` must point to `rows*cols` doubles; `names`, when non-null, to
// `cols` NUL-terminated strings; `out` must be writable.
enum SubbootStatus subboot_dataset_new(const double *values,
                                       size_t rows,
                                       size_t cols,
                                       const char *const *names,
                                       struct SubbootDataset **out_handle);

// # Safety
// `handle` must come from [`subboot_dataset_new`] and not be used afterwards.
void subboot_dataset_free(struct SubbootDataset *handle);

// # Safety
// `handle` must be a live dataset handle or null.
size_t subboot_dataset_rows(const struct SubbootDataset *handle);

// # Safety
// `handle` must be a live dataset handle or null.
size_t subboot_dataset_cols(const struct SubbootDataset *handle);

// Resolves a registered estimator (`mean`, `ols`, `logit1`, `misscorr`,
// `iv`) against `data`. `x` is a comma-separated column list; `x`, `y`, `z`
// and `w` may each be null to use the defaults.
//
// # Safety
// String arguments must be null or NUL-terminated; `data` a live handle;
// `out` writable.
enum SubbootStatus subboot_estimator_new(const char *name,
                                         const struct SubbootDataset *data,
                                         const char *x,
                                         const char *y,
                                         const char *z,
                                         const char *w,
                                         struct SubbootEstimator **out_handle);

// # Safety
// `handle` must come from [`subboot_estimator_new`] and not be used afterwards.
void subboot_estimator_free(struct SubbootEstimator *handle);

// # Safety
// `handle` must be a live estimator handle or null.
size_t subboot_estimator_dim(const struct SubbootEstimator *handle);

// Runs one engine and writes the d×d covariance estimate, row-major, into
// `matrix` (capacity `matrix_len`). `method` is a [`SubbootMethod`] code.
//
// # Safety
// Handles must be live; `matrix` must hold `matrix_len` doubles; `info` may
// be null.
enum SubbootStatus subboot_run_engine(int32_t method,
                                      const struct SubbootDataset *data,
                                      const struct SubbootEstimator *estimator,
                                      size_t n,
                                      size_t r,
                                      size_t b,
                                      uint64_t seed,
                                      size_t workers,
                                      double *matrix,
                                      size_t matrix_len,
                                      struct SubbootRunInfo *info);

// Moment constants of the estimator's per-row representation on `data`.
//
// # Safety
// Handles must be live; `out` writable.
enum SubbootStatus subboot_moments(const struct SubbootDataset *data,
                                   const struct SubbootEstimator *estimator,
                                   struct SubbootMoments *out_moments);

// Leading-order MSE of `method` at N = `big_n`. Pass 0 for parameters the
// method does not take (AF: all; TB: n and r; SB/SDB: b).
//
// # Safety
// `constants` must be readable and `out` writable.
enum SubbootStatus subboot_predict_mse(int32_t method,
                                       size_t big_n,
                                       size_t n,
                                       size_t r,
                                       size_t b,
                                       const struct SubbootConstants *constants,
                                       int32_t include_cross,
                                       struct SubbootMsePrediction *out_prediction);

// BLB optimum for cost α1·n^γ·R·B + α2·n·R ≤ `c_max`. `n_override` = 0
// selects n = ⌊N^0.7⌋.
//
// # Safety
// `out` must be writable.
enum SubbootStatus subboot_tune_blb(double tilde_c1,
                                    double tilde_c2,
                                    double tilde_c3,
                                    double alpha1,
                                    double alpha2,
                                    double c_max,
                                    size_t big_n,
                                    size_t n_override,
                                    double gamma,
                                    struct SubbootTuned *out_tuned);

// SB or SDB optimum for cost α·n^γ·R ≤ `c_max` with objective c1'/R + c2'/n².
//
// # Safety
// `out` must be writable.
enum SubbootStatus subboot_tune_linear(int32_t method,
                                       double c1_prime,
                                       double c2_prime,
                                       double alpha,
                                       double c_max,
                                       size_t big_n,
                                       double gamma,
                                       int32_t literal_replicates,
                                       struct SubbootTuned *out_tuned);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBBOOT_H */
