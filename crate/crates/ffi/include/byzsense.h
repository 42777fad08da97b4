#ifndef BYZSENSE_H
#define BYZSENSE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BzMethod {
  BZ_METHOD_MEDCOUPLE = 0,
  BZ_METHOD_MEAN_DIFFERENCE = 1,
  BZ_METHOD_MAD = 2,
  BZ_METHOD_SN = 3,
  BZ_METHOD_QN = 4,
} BzMethod;

typedef enum BzStatus {
  BZ_STATUS_OK = 0,
  BZ_STATUS_INVALID_INPUT = 1,
  BZ_STATUS_DEGENERATE_SAMPLE = 2,
  BZ_STATUS_MISSING_INPUT = 3,
  BZ_STATUS_INVALID_CONFIG = 4,
  BZ_STATUS_IO = 5,
  BZ_STATUS_INVARIANT = 6,
  BZ_STATUS_NULL_POINTER = 7,
  BZ_STATUS_BUFFER_TOO_SMALL = 8,
  BZ_STATUS_PANIC = 9,
} BzStatus;

/**
 * Scenario configuration handle.
 */
typedef struct BzConfig BzConfig;

/**
 * Simulated and evaluated scenario.
 */
typedef struct BzScenario BzScenario;

/**
 * Result of an iterative threshold computation.
 */
typedef struct BzThreshold BzThreshold;

/**
 * Adjusted-boxplot record.
 */
typedef struct BzFences {
  double mc;
  double q1;
  double q3;
  double iqr;
  double h_l;
  double h_r;
  double lower_fence;
  double upper_fence;
} BzFences;

typedef struct BzDetectorParams {
  double k;
  size_t max_iterations;
  double tolerance;
  bool two_sided;
} BzDetectorParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *bz_last_error(void);

/**
 * Exit code the command-line tool would use for `status`.
 */
int32_t bz_status_exit_code(enum BzStatus status);

const char *bz_version(void);

/**
 * Mean absolute pairwise difference over all ordered pairs, divided by n².
 */
enum BzStatus bz_mean_difference(const double *values, size_t len, double *result);

/**
 * Unscaled median absolute deviation.
 */
enum BzStatus bz_mad(const double *values, size_t len, double *result);

enum BzStatus bz_sn(const double *values, size_t len, double *result);

enum BzStatus bz_qn(const double *values, size_t len, double *result);

enum BzStatus bz_medcouple(const double *values, size_t len, double *result);

enum BzStatus bz_median(const double *values, size_t len, double *result);

enum BzStatus bz_adjusted_fences(const double *values, size_t len, struct BzFences *result);

/**
 * Single-pass lower exclusion threshold.
 */
enum BzStatus bz_lower_threshold(const double *values,
                                 size_t len,
                                 enum BzMethod method,
                                 double k,
                                 double *result);

struct BzDetectorParams bz_detector_params_default(void);

/**
 * Runs the iterative exclusion loop; `result` receives a new handle.
 */
enum BzStatus bz_iterative_threshold(const double *values,
                                     size_t len,
                                     enum BzMethod method,
                                     const struct BzDetectorParams *params,
                                     struct BzThreshold **result);

void bz_threshold_free(struct BzThreshold *t);

enum BzStatus bz_threshold_lower(const struct BzThreshold *t, double *result);

enum BzStatus bz_threshold_iterations(const struct BzThreshold *t, size_t *result);

/**
 * True when the loop stopped because another round would leave too few values.
 */
enum BzStatus bz_threshold_truncated(const struct BzThreshold *t, bool *result);

/**
 * Excluded sample indices in ascending order. Returns `BufferTooSmall` with
 * `written` set to the required length when `cap` is insufficient.
 */
enum BzStatus bz_threshold_excluded(const struct BzThreshold *t,
                                    size_t *buf,
                                    size_t cap,
                                    size_t *written);

struct BzConfig *bz_config_default(void);

enum BzStatus bz_config_parse(const char *toml, struct BzConfig **result);

enum BzStatus bz_config_load(const char *path, struct BzConfig **result);

void bz_config_free(struct BzConfig *cfg);

enum BzStatus bz_config_set_seed(struct BzConfig *cfg, uint64_t seed);

enum BzStatus bz_config_set_malicious(struct BzConfig *cfg, size_t n_malicious);

enum BzStatus bz_config_seed(const struct BzConfig *cfg, uint64_t *result);

/**
 * Simulates the scenario and applies every listed method plus the
 * unfiltered baseline.
 */
enum BzStatus bz_scenario_evaluate(const struct BzConfig *cfg,
                                   const enum BzMethod *methods_ptr,
                                   size_t n_methods,
                                   bool parallel,
                                   struct BzScenario **result);

void bz_scenario_free(struct BzScenario *s);

enum BzStatus bz_scenario_instant_count(const struct BzScenario *s, size_t *result);

/**
 * Instants whose flagged set equals the true malicious set.
 */
enum BzStatus bz_scenario_setmatch(const struct BzScenario *s,
                                   enum BzMethod method,
                                   size_t *result);

/**
 * Detection probability of `method` at a global threshold.
 */
enum BzStatus bz_scenario_pd(const struct BzScenario *s,
                             enum BzMethod method,
                             double global_threshold,
                             double *result);

/**
 * Detection probability without any exclusion.
 */
enum BzStatus bz_scenario_baseline_pd(const struct BzScenario *s,
                                      double global_threshold,
                                      double *result);

/**
 * Users flagged by `method` at one instant, ascending.
 */
enum BzStatus bz_scenario_flagged(const struct BzScenario *s,
                                  enum BzMethod method,
                                  size_t instant_index,
                                  size_t *buf,
                                  size_t cap,
                                  size_t *written);

enum BzStatus bz_scenario_fused_level(const struct BzScenario *s,
                                      enum BzMethod method,
                                      size_t instant_index,
                                      double *result);

/**
 * Runs one scenario and writes CSV files plus `manifest.json` to `out_dir`.
 */
enum BzStatus bz_run(const struct BzConfig *cfg,
                     const enum BzMethod *methods_ptr,
                     size_t n_methods,
                     const char *out_dir,
                     bool parallel);

/**
 * Runs one scenario per attacker count under `out_dir/m<count>/`.
 */
enum BzStatus bz_sweep(const struct BzConfig *cfg,
                       const size_t *counts,
                       size_t n_counts,
                       const enum BzMethod *methods_ptr,
                       size_t n_methods,
                       const char *out_dir,
                       bool parallel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BYZSENSE_H */
