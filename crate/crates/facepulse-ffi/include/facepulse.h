/* C interface to the facepulse heart-rate estimation library. */

#ifndef FACEPULSE_H
#define FACEPULSE_H

/* Generated by cbindgen from the facepulse-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Window noise label attached to each estimate.
 */
typedef enum FpLabel {
  FP_LABEL_STILL = 0,
  FP_LABEL_MOTION = 1,
  FP_LABEL_EXPRESSION = 2,
} FpLabel;

/**
 * Estimator selection for [`fp_estimate`].
 */
typedef enum FpMethod {
  /**
   * Uniformly weighted green mean, strongest peak per window.
   */
  FP_METHOD_GREEN_BASELINE = 0,
  /**
   * Label-adaptive extraction, strongest peak per window.
   */
  FP_METHOD_ADAPTIVE_NO_TRACK = 1,
  /**
   * Label-adaptive extraction with still-anchored peak tracking.
   */
  FP_METHOD_ADAPTIVE_TRACKED = 2,
} FpMethod;

/**
 * How the reported rate was chosen among the window's spectral peaks.
 */
typedef enum FpSource {
  FP_SOURCE_ARGMAX = 0,
  FP_SOURCE_TRACKED = 1,
  FP_SOURCE_FALLBACK = 2,
} FpSource;

/**
 * Result status of every fallible call.
 */
typedef enum FpStatus {
  /**
   * The call succeeded.
   */
  FP_STATUS_OK = 0,
  /**
   * The input was malformed or out of range (bad file, bad index, bad
   * method id).
   */
  FP_STATUS_INPUT_ERROR = 1,
  /**
   * An internal invariant failed; the handle state is unchanged.
   */
  FP_STATUS_INTERNAL_ERROR = 2,
  /**
   * A required pointer argument was null.
   */
  FP_STATUS_NULL_ARGUMENT = 3,
  /**
   * A string argument was not valid UTF-8.
   */
  FP_STATUS_INVALID_UTF8 = 4,
} FpStatus;

/**
 * Opaque handle to a per-window heart-rate series.
 */
typedef struct FpHrSeries FpHrSeries;

/**
 * Opaque handle to a loaded session trace.
 */
typedef struct FpTrace FpTrace;

/**
 * One per-window heart-rate estimate, written by [`fp_hr_series_get`].
 */
typedef struct FpEstimate {
  /**
   * Zero-based index of the analysis window.
   */
  uint64_t window_index;
  /**
   * Start of the window in seconds from the first frame.
   */
  double t_start_sec;
  /**
   * Estimated heart rate in beats per minute.
   */
  double hr_bpm;
  /**
   * Noise label of the window.
   */
  enum FpLabel label;
  /**
   * Peak-selection path that produced the rate.
   */
  enum FpSource source;
} FpEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the calling thread's most recent failure.
 *
 * The pointer refers to thread-local storage: it is never null, stays
 * valid until the next failing call on the same thread, and must not be
 * freed by the caller. Before any failure it is the empty string.
 */
const char *fp_last_error_message(void);

/**
 * Reads a pulse-trace CSV from `path` into a new trace handle.
 *
 * On success writes the handle to `*out` and returns `Ok`; the caller
 * owns the handle and releases it with [`fp_trace_free`].
 *
 * # Safety
 *
 * `path` must point to a NUL-terminated string and `out` to a writable
 * pointer slot; both stay borrowed only for the duration of the call.
 */
enum FpStatus fp_trace_read(const char *path, struct FpTrace **out);

/**
 * Releases a trace handle. Accepts null.
 *
 * # Safety
 *
 * `trace` must be null or a handle from [`fp_trace_read`] that has not
 * been freed already.
 */
void fp_trace_free(struct FpTrace *trace);

/**
 * Number of frames in the trace, or 0 if `trace` is null.
 *
 * # Safety
 *
 * `trace` must be null or a live handle from [`fp_trace_read`].
 */
size_t fp_trace_n_frames(const struct FpTrace *trace);

/**
 * Number of sub-ROI columns in the trace, or 0 if `trace` is null.
 *
 * # Safety
 *
 * `trace` must be null or a live handle from [`fp_trace_read`].
 */
size_t fp_trace_n_subrois(const struct FpTrace *trace);

/**
 * Frame rate of the trace in frames per second, or 0 if `trace` is null.
 *
 * # Safety
 *
 * `trace` must be null or a live handle from [`fp_trace_read`].
 */
double fp_trace_fps(const struct FpTrace *trace);

/**
 * Estimates a per-window heart-rate series from `trace` with the default
 * pipeline settings.
 *
 * `method` is one of the [`FpMethod`] values (passed as its integer to
 * keep out-of-range inputs a checked error rather than undefined
 * behavior). On success writes the series handle to `*out`; the caller
 * releases it with [`fp_hr_series_free`].
 *
 * # Safety
 *
 * `trace` must be a live handle from [`fp_trace_read`] and `out` a
 * writable pointer slot.
 */
enum FpStatus fp_estimate(const struct FpTrace *trace, uint32_t method, struct FpHrSeries **out);

/**
 * Number of windows in the series, or 0 if `series` is null.
 *
 * # Safety
 *
 * `series` must be null or a live handle from [`fp_estimate`].
 */
size_t fp_hr_series_len(const struct FpHrSeries *series);

/**
 * Copies the estimate at `index` into `*out`.
 *
 * Returns `InputError` when `index` is out of range.
 *
 * # Safety
 *
 * `series` must be a live handle from [`fp_estimate`] and `out` a
 * writable [`FpEstimate`] slot.
 */
enum FpStatus fp_hr_series_get(const struct FpHrSeries *series,
                               size_t index,
                               struct FpEstimate *out);

/**
 * Releases a series handle. Accepts null.
 *
 * # Safety
 *
 * `series` must be null or a handle from [`fp_estimate`] that has not
 * been freed already.
 */
void fp_hr_series_free(struct FpHrSeries *series);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FACEPULSE_H */
