#ifndef ISCAP_H
#define ISCAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ISCAP_MODE_RSMA 0

#define ISCAP_MODE_SDMA 1

/**
 * Result of every fallible call.
 */
typedef enum IscapStatus {
  ISCAP_STATUS_OK = 0,
  ISCAP_STATUS_NULL_POINTER = 1,
  /**
   * Bad UTF-8, unknown mode, or a buffer of the wrong length.
   */
  ISCAP_STATUS_INVALID_ARGUMENT = 2,
  ISCAP_STATUS_INVALID_CONFIG = 3,
  ISCAP_STATUS_DIMENSION_MISMATCH = 4,
  ISCAP_STATUS_SINGULAR_FIM = 5,
  ISCAP_STATUS_THRESHOLD_UNREACHABLE = 6,
  ISCAP_STATUS_ZERO_PRECODER = 7,
  ISCAP_STATUS_PARSE = 8,
  /**
   * Any other library error.
   */
  ISCAP_STATUS_OTHER = 9,
  ISCAP_STATUS_PANIC = 10,
} IscapStatus;

/**
 * Opaque system configuration.
 */
typedef struct IscapConfig IscapConfig;

/**
 * Opaque optimizer output.
 */
typedef struct IscapResult IscapResult;

/**
 * Opaque channel realization.
 */
typedef struct IscapScenario IscapScenario;

/**
 * Scalar summary of a run.
 */
typedef struct IscapSummary {
  /**
   * Nats.
   */
  double objective;
  /**
   * Bits per channel use.
   */
  double mmf_rate;
  double crb;
  bool converged;
  bool feasible;
  double min_slack;
  size_t outer_iterations;
  size_t middle_iterations;
  size_t inner_iterations;
  double total_seconds;
} IscapSummary;

/**
 * Metrics of a caller-supplied precoder.
 */
typedef struct IscapEvaluation {
  /**
   * Objective with the common rate split optimally, nats.
   */
  double objective;
  /**
   * Bits per channel use.
   */
  double mmf_rate;
  double crb;
  double total_power;
} IscapEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *iscap_last_error(void);

/**
 * Library version as a static string.
 */
const char *iscap_version(void);

/**
 * Default configuration (N_t = N_r = K = 4, L = 2, 25 dB, λ = 0.1).
 */
struct IscapConfig *iscap_config_new(void);

/**
 * Parse a TOML configuration; missing keys take their defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IscapStatus iscap_config_from_toml(const char *toml, struct IscapConfig **out);

/**
 * Set one key, e.g. `("eh_threshold", "[0.004, 0.004]")`. The configuration
 * is left unchanged on failure.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be NUL-terminated.
 */
enum IscapStatus iscap_config_set(struct IscapConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or come from this library, and not be used afterwards.
 */
void iscap_config_free(struct IscapConfig *cfg);

/**
 * Draw the channels of stream `seed` under `cfg`.
 *
 * # Safety
 * `cfg` must come from this library and `out` be a valid pointer.
 */
enum IscapStatus iscap_scenario_generate(const struct IscapConfig *cfg,
                                         uint64_t seed,
                                         struct IscapScenario **out);

/**
 * # Safety
 * `s` must be null or come from this library, and not be used afterwards.
 */
void iscap_scenario_free(struct IscapScenario *s);

/**
 * Run the optimizer. `mode` is `ISCAP_MODE_RSMA` or `ISCAP_MODE_SDMA`.
 *
 * # Safety
 * Handles must come from this library and `out` be a valid pointer.
 */
enum IscapStatus iscap_run(const struct IscapScenario *s,
                           const struct IscapConfig *cfg,
                           uint32_t mode,
                           struct IscapResult **out);

/**
 * # Safety
 * `r` must come from this library and `out` be a valid pointer.
 */
enum IscapStatus iscap_result_summary(const struct IscapResult *r, struct IscapSummary *out);

/**
 * Copy the optimized precoder into `buf` (see [`iscap_evaluate`] for the
 * layout). `len` must equal `2·N_t·(K+1)`.
 *
 * # Safety
 * `r` must come from this library and `buf` point to `len` doubles.
 */
enum IscapStatus iscap_result_precoder(const struct IscapResult *r, double *buf, size_t len);

/**
 * The full run record as JSON; release with [`iscap_string_free`].
 *
 * # Safety
 * `r` must come from this library and `out` be a valid pointer.
 */
enum IscapStatus iscap_result_to_json(const struct IscapResult *r, char **out);

/**
 * # Safety
 * `r` must be null or come from this library, and not be used afterwards.
 */
void iscap_result_free(struct IscapResult *r);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void iscap_string_free(char *s);

/**
 * Evaluate a precoder on a scenario. `precoder` holds `2·N_t·(K+1)` doubles:
 * the common column then the K private columns, each as `N_t` interleaved
 * (re, im) pairs. In SDMA mode the common column is ignored.
 *
 * # Safety
 * Handles must come from this library, `precoder` point to `len` doubles and
 * `out` be a valid pointer.
 */
enum IscapStatus iscap_evaluate(const struct IscapScenario *s,
                                const struct IscapConfig *cfg,
                                uint32_t mode,
                                const double *precoder,
                                size_t len,
                                struct IscapEvaluation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISCAP_H */
