#ifndef PEAKSHAVER_H
#define PEAKSHAVER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum PsStatus {
  PS_STATUS_OK = 0,
  // A required pointer argument was null.
  PS_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  PS_STATUS_INVALID_UTF8 = 2,
  // A JSON document could not be parsed or has the wrong shape.
  PS_STATUS_JSON = 3,
  // The instance or generator config failed validation.
  PS_STATUS_INVALID_INSTANCE = 4,
  // The engine's preconditions do not hold for this instance.
  PS_STATUS_PRECONDITION = 5,
  // An internal consistency check failed.
  PS_STATUS_CONTRACT = 6,
  // The requested value does not exist for this input.
  PS_STATUS_UNSUPPORTED = 7,
  // An id or buffer length is out of range.
  PS_STATUS_OUT_OF_RANGE = 8,
  // The instance is too large for exact enumeration.
  PS_STATUS_TOO_LARGE = 9,
  // A panic was caught at the boundary.
  PS_STATUS_PANIC = 10,
} PsStatus;

// Opaque instance handle.
typedef struct PsInstance PsInstance;

// Opaque handle to a finished engine run.
typedef struct PsRun PsRun;

// Summary metrics of a run.
typedef struct PsMetrics {
  double revenue;
  double normalized_revenue;
  double utilization;
  double acceptance_rate;
  double actual_peak;
} PsMetrics;

// Library version as a static NUL-terminated string.
const char *ps_version(void);

// Message of the last failing call on this thread, or null if none.
// The pointer stays valid until the next failing call on this thread.
const char *ps_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void ps_string_free(char *s);

// Parses an instance from JSON. The instance is not validated; see
// [`ps_instance_validate`].
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum PsStatus ps_instance_from_json(const char *json, struct PsInstance **out);

// Samples an instance. `config_json` may be null for the default config;
// `seed` overrides any seed in the config.
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` must be writable.
enum PsStatus ps_instance_generate(const char *config_json, uint64_t seed, struct PsInstance **out);

// Serializes an instance to JSON; free the result with [`ps_string_free`].
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_instance_to_json(const struct PsInstance *instance, char **out);

// Releases an instance. Null is ignored.
//
// # Safety
// `instance` must come from this library and not have been freed already.
void ps_instance_free(struct PsInstance *instance);

// Number of requests in the instance.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_instance_num_requests(const struct PsInstance *instance, size_t *out);

// Number of time slots in the instance.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_instance_horizon(const struct PsInstance *instance, size_t *out);

// Counts validation problems: `errors` make the instance unusable,
// `flags` are advisory. Either output may be null.
//
// # Safety
// `instance` must be a live handle.
enum PsStatus ps_instance_validate(const struct PsInstance *instance,
                                   size_t *errors,
                                   size_t *flags);

// Competitive-ratio bound of the instance.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_approximation_bound(const struct PsInstance *instance, double *out);

// Schedules the instance with SCS.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_run_scs(const struct PsInstance *instance, struct PsRun **out);

// Schedules the instance with the per-station right-to-left baseline.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_run_greedy_rtl(const struct PsInstance *instance,
                                bool reconsider,
                                struct PsRun **out);

// Releases a run. Null is ignored.
//
// # Safety
// `run` must come from this library and not have been freed already.
void ps_run_free(struct PsRun *run);

// Summary metrics of a run.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum PsStatus ps_run_metrics(const struct PsRun *run, struct PsMetrics *out);

// Dual objective of the run's certificate; `Unsupported` for engines that
// do not produce one.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum PsStatus ps_run_dual_objective(const struct PsRun *run, double *out);

// Whether request `request_id` is in the selected set.
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum PsStatus ps_run_is_selected(const struct PsRun *run, size_t request_id, bool *out);

// Copies the per-slot energy of request `request_id` into `buf`, which must
// hold at least `horizon` values. Unserved requests yield zeros.
//
// # Safety
// `run` must be a live handle; `buf` must be writable for `len` doubles.
enum PsStatus ps_run_allocation(const struct PsRun *run,
                                size_t request_id,
                                double *buf,
                                size_t len);

// Serializes the run's schedule to JSON; free with [`ps_string_free`].
//
// # Safety
// `run` must be a live handle; `out` must be writable.
enum PsStatus ps_run_schedule_json(const struct PsRun *run, char **out);

// Exact optimal revenue by enumeration; `TooLarge` above `limit` requests.
//
// # Safety
// `instance` must be a live handle; `out` must be writable.
enum PsStatus ps_brute_force_opt(const struct PsInstance *instance, size_t limit, double *out);

#endif  /* PEAKSHAVER_H */
