#ifndef COXSWITCH_H
#define COXSWITCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CoxStatus {
  COX_STATUS_OK = 0,
  COX_STATUS_NULL_POINTER = 1,
  COX_STATUS_INVALID_UTF8 = 2,
  // Invalid configuration, dimensions or certificate structure.
  COX_STATUS_CONFIG = 3,
  // A numerical validation failed.
  COX_STATUS_VALIDATION = 4,
  // A trajectory left the divergence guard.
  COX_STATUS_DIVERGENCE = 5,
  // The caller's buffer is shorter than the data.
  COX_STATUS_BUFFER_TOO_SMALL = 6,
  // The requested data is not available (for example `V₁` without a certificate).
  COX_STATUS_UNAVAILABLE = 7,
  // A Rust panic was caught at the boundary.
  COX_STATUS_INTERNAL = 8,
} CoxStatus;

// Bundled network examples.
typedef enum CoxCase {
  COX_CASE_CONSTANT_DELAY = 0,
  COX_CASE_AFFINE_DELAY = 1,
} CoxCase;

// Ensemble series that can be copied out of a [`CoxMcStats`].
typedef enum CoxSeries {
  COX_SERIES_TIMES = 0,
  COX_SERIES_MEAN_X2 = 1,
  COX_SERIES_SE_X2 = 2,
  COX_SERIES_NU_MEAN_X2 = 3,
  COX_SERIES_MEAN_V = 4,
  COX_SERIES_SE_V = 5,
} CoxSeries;

// Parsed and validated experiment.
typedef struct CoxExperiment CoxExperiment;

// Monte Carlo ensemble statistics.
typedef struct CoxMcStats CoxMcStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *cox_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cox_version(void);

// Parse a JSON experiment config into a new handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum CoxStatus cox_experiment_from_json(const char *json, struct CoxExperiment **out);

// Load one of the bundled network examples.
//
// # Safety
// `out` must be a valid pointer.
enum CoxStatus cox_experiment_bundled(enum CoxCase case_, struct CoxExperiment **out);

// Release an experiment handle. Null is ignored.
//
// # Safety
// `exp` must come from this library and not be used afterwards.
void cox_experiment_free(struct CoxExperiment *exp);

// Override the simulation step, horizon, trial count and seed.
//
// # Safety
// `exp` must be a valid handle.
enum CoxStatus cox_experiment_set_simulation(struct CoxExperiment *exp,
                                             double step,
                                             double horizon,
                                             size_t trials,
                                             uint64_t seed);

// Check the block-matrix certificate. Writes the largest eigenvalue over
// all modes and cases and whether it is within tolerance (1 or 0).
//
// # Safety
// `exp` must be a valid handle; output pointers must be valid.
enum CoxStatus cox_verify_thm4(const struct CoxExperiment *exp, double *lambda_max, int32_t *pass);

// Run the Monte Carlo ensemble, including `V₁` when a certificate exists.
//
// # Safety
// `exp` must be a valid handle and `out` a valid pointer.
enum CoxStatus cox_mc_run(const struct CoxExperiment *exp, struct CoxMcStats **out);

// Number of recorded time points, or 0 for a null handle.
//
// # Safety
// `stats` must be null or a valid handle.
size_t cox_mc_len(const struct CoxMcStats *stats);

// Number of trials that diverged, or 0 for a null handle.
//
// # Safety
// `stats` must be null or a valid handle.
size_t cox_mc_diverged(const struct CoxMcStats *stats);

// Copy one series into `buf` (capacity `len`).
//
// # Safety
// `stats` must be a valid handle and `buf` valid for `len` writes.
enum CoxStatus cox_mc_copy_series(const struct CoxMcStats *stats,
                                  enum CoxSeries series,
                                  double *buf,
                                  size_t len);

// Release ensemble statistics. Null is ignored.
//
// # Safety
// `stats` must come from [`cox_mc_run`] and not be used afterwards.
void cox_mc_free(struct CoxMcStats *stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COXSWITCH_H */
