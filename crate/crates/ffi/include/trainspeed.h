#ifndef TRAINSPEED_H
#define TRAINSPEED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_IO = 3,
  TS_STATUS_PARSE = 4,
  TS_STATUS_VALIDATION = 5,
  TS_STATUS_NUMERIC = 6,
  TS_STATUS_BUFFER_TOO_SMALL = 7,
  TS_STATUS_PANIC = 8,
} TsStatus;

typedef enum TsRole {
  TS_ROLE_TRAIN = 0,
  TS_ROLE_VALIDATION = 1,
  TS_ROLE_TEST = 2,
} TsRole;

/**
 * A trained CNN checkpoint.
 */
typedef struct TsModel TsModel;

/**
 * A loaded or simulated set of runs.
 */
typedef struct TsRunSet TsRunSet;

typedef struct TsRunInfo {
  size_t len;
  bool has_wsp;
  bool has_ground_truth;
  enum TsRole role;
} TsRunInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ts_last_error_message(void);

/**
 * Loads runs from a signals CSV (and its metadata sidecar, if present).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TsStatus ts_runs_load(const char *path, struct TsRunSet **out);

/**
 * Simulates the 17-run benchmark suite.
 *
 * # Safety
 * `out` must be writable.
 */
enum TsStatus ts_runs_benchmark_suite(uint64_t seed, struct TsRunSet **out);

/**
 * # Safety
 * `runs` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void ts_runs_free(struct TsRunSet *runs);

/**
 * # Safety
 * `runs` must be a live handle; `out_count` must be writable.
 */
enum TsStatus ts_runs_count(const struct TsRunSet *runs, size_t *out_count);

/**
 * # Safety
 * `runs` must be a live handle; `out_info` must be writable.
 */
enum TsStatus ts_run_info(const struct TsRunSet *runs, size_t index, struct TsRunInfo *out_info);

/**
 * Copies the run id (NUL-terminated) into `buf`. `out_len` receives the
 * id length without the terminator.
 *
 * # Safety
 * `runs` must be a live handle; `buf` must hold `capacity` bytes.
 */
enum TsStatus ts_run_id(const struct TsRunSet *runs,
                        size_t index,
                        char *buf,
                        size_t capacity,
                        size_t *out_len);

/**
 * Sample times and measured channels of one run. Missing ground truth is
 * written as NaN. Any of the three speed buffers may be null to skip it.
 *
 * # Safety
 * `runs` must be a live handle; non-null buffers must hold `capacity`
 * doubles.
 */
enum TsStatus ts_run_samples(const struct TsRunSet *runs,
                             size_t index,
                             double *out_t,
                             double *out_wheel,
                             double *out_gps,
                             double *out_truth,
                             size_t capacity,
                             size_t *out_written);

/**
 * Runs the adaptive Kalman filter over one run. `config_json` may be null
 * for the default configuration.
 *
 * # Safety
 * `runs` must be a live handle; `config_json` null or NUL-terminated;
 * buffers as described in the crate docs.
 */
enum TsStatus ts_akf_run(const struct TsRunSet *runs,
                         size_t index,
                         const char *config_json,
                         double *out_t,
                         double *out_speed,
                         size_t capacity,
                         size_t *out_written);

/**
 * Loads a checkpoint written by `trainspeed train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum TsStatus ts_model_load(const char *path, struct TsModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void ts_model_free(struct TsModel *model);

/**
 * Number of past samples each prediction consumes.
 *
 * # Safety
 * `model` must be a live handle; `out_len` must be writable.
 */
enum TsStatus ts_model_history_len(const struct TsModel *model, size_t *out_len);

/**
 * Sliding-window speed predictions (m/s) for one run.
 *
 * # Safety
 * `model` and `runs` must be live handles; buffers as described in the
 * crate docs.
 */
enum TsStatus ts_model_predict(const struct TsModel *model,
                               const struct TsRunSet *runs,
                               size_t index,
                               double *out_t,
                               double *out_speed,
                               size_t capacity,
                               size_t *out_written);

/**
 * RMSE of an estimate trace against the run's ground truth, over the
 * timestamps the two share.
 *
 * # Safety
 * `runs` must be a live handle; `t` and `speed` must hold `len` doubles;
 * `out_rmse` must be writable.
 */
enum TsStatus ts_rmse(const struct TsRunSet *runs,
                      size_t index,
                      const double *t,
                      const double *speed,
                      size_t len,
                      double *out_rmse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRAINSPEED_H */
