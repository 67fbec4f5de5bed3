//! C ABI over the heart-rate estimation pipeline: opaque handles, status
//! codes, and a per-thread error message.
//!
//! Conventions:
//! * Constructors return a status and write the new handle through an
//!   out-pointer; every handle is released with its matching `_free`
//!   function, which accepts null.
//! * Every call is panic-safe: a panic inside the library is caught and
//!   reported as `FpStatus::InternalError` instead of unwinding into C.
//! * After any non-`Ok` status, [`fp_last_error_message`] returns a
//!   description of the failure. The message is thread-local and stays
//!   valid until the next failing call on the same thread.
//!
//! The generated header lives at `include/facepulse.h` and is refreshed
//! by the build script whenever this file changes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use facepulse::bench::baseline_green;
use facepulse::config::PipelineConfig;
use facepulse::error::Error;
use facepulse::ingest::{read_trace_csv, SessionTrace};
use facepulse::labeler::FrameLabel;
use facepulse::spectral::{
    estimate_session, estimate_session_argmax, HrEstimate, HrSeries, HrSource,
};

/// Result status of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    /// The call succeeded.
    Ok = 0,
    /// The input was malformed or out of range (bad file, bad index, bad
    /// method id).
    InputError = 1,
    /// An internal invariant failed; the handle state is unchanged.
    InternalError = 2,
    /// A required pointer argument was null.
    NullArgument = 3,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 4,
}

/// Estimator selection for [`fp_estimate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpMethod {
    /// Uniformly weighted green mean, strongest peak per window.
    GreenBaseline = 0,
    /// Label-adaptive extraction, strongest peak per window.
    AdaptiveNoTrack = 1,
    /// Label-adaptive extraction with still-anchored peak tracking.
    AdaptiveTracked = 2,
}

/// Window noise label attached to each estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpLabel {
    Still = 0,
    Motion = 1,
    Expression = 2,
}

/// How the reported rate was chosen among the window's spectral peaks.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpSource {
    Argmax = 0,
    Tracked = 1,
    Fallback = 2,
}

/// One per-window heart-rate estimate, written by [`fp_hr_series_get`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpEstimate {
    /// Zero-based index of the analysis window.
    pub window_index: u64,
    /// Start of the window in seconds from the first frame.
    pub t_start_sec: f64,
    /// Estimated heart rate in beats per minute.
    pub hr_bpm: f64,
    /// Noise label of the window.
    pub label: FpLabel,
    /// Peak-selection path that produced the rate.
    pub source: FpSource,
}

/// Opaque handle to a loaded session trace.
pub struct FpTrace(SessionTrace);

/// Opaque handle to a per-window heart-rate series.
pub struct FpHrSeries(HrSeries);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    // A NUL inside the message would truncate it; replace rather than fail.
    let owned = CString::new(msg.replace('\0', "?")).unwrap_or_else(|_| CString::default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn fail(status: FpStatus, msg: &str) -> FpStatus {
    set_last_error(msg);
    status
}

fn status_of(err: &Error) -> FpStatus {
    if err.exit_code() == 2 {
        FpStatus::InternalError
    } else {
        FpStatus::InputError
    }
}

fn report(err: &Error) -> FpStatus {
    fail(status_of(err), &err.to_string())
}

/// Runs `body`, converting any panic into `InternalError`.
fn guarded(body: impl FnOnce() -> FpStatus) -> FpStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(FpStatus::InternalError, "panic inside facepulse"))
}

fn label_of(label: FrameLabel) -> FpLabel {
    match label {
        FrameLabel::Still => FpLabel::Still,
        FrameLabel::Motion => FpLabel::Motion,
        FrameLabel::Expression => FpLabel::Expression,
    }
}

fn source_of(source: HrSource) -> FpSource {
    match source {
        HrSource::Argmax => FpSource::Argmax,
        HrSource::Tracked => FpSource::Tracked,
        HrSource::Fallback => FpSource::Fallback,
    }
}

fn estimate_of(est: &HrEstimate) -> FpEstimate {
    FpEstimate {
        window_index: est.window_index as u64,
        t_start_sec: est.t_start_sec,
        hr_bpm: est.hr_bpm,
        label: label_of(est.label),
        source: source_of(est.source),
    }
}

/// Message describing the calling thread's most recent failure.
///
/// The pointer refers to thread-local storage: it is never null, stays
/// valid until the next failing call on the same thread, and must not be
/// freed by the caller. Before any failure it is the empty string.
#[no_mangle]
pub extern "C" fn fp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Reads a pulse-trace CSV from `path` into a new trace handle.
///
/// On success writes the handle to `*out` and returns `Ok`; the caller
/// owns the handle and releases it with [`fp_trace_free`].
///
/// # Safety
///
/// `path` must point to a NUL-terminated string and `out` to a writable
/// pointer slot; both stay borrowed only for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn fp_trace_read(path: *const c_char, out: *mut *mut FpTrace) -> FpStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(FpStatus::NullArgument, "fp_trace_read: null argument");
        }
        let raw = unsafe { CStr::from_ptr(path) };
        let Ok(path) = raw.to_str() else {
            return fail(
                FpStatus::InvalidUtf8,
                "fp_trace_read: path is not valid UTF-8",
            );
        };
        match read_trace_csv(Path::new(path)) {
            Ok(trace) => {
                unsafe { *out = Box::into_raw(Box::new(FpTrace(trace))) };
                FpStatus::Ok
            }
            Err(err) => report(&err),
        }
    })
}

/// Releases a trace handle. Accepts null.
///
/// # Safety
///
/// `trace` must be null or a handle from [`fp_trace_read`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn fp_trace_free(trace: *mut FpTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Number of frames in the trace, or 0 if `trace` is null.
///
/// # Safety
///
/// `trace` must be null or a live handle from [`fp_trace_read`].
#[no_mangle]
pub unsafe extern "C" fn fp_trace_n_frames(trace: *const FpTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.n_frames())
}

/// Number of sub-ROI columns in the trace, or 0 if `trace` is null.
///
/// # Safety
///
/// `trace` must be null or a live handle from [`fp_trace_read`].
#[no_mangle]
pub unsafe extern "C" fn fp_trace_n_subrois(trace: *const FpTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.n_subrois)
}

/// Frame rate of the trace in frames per second, or 0 if `trace` is null.
///
/// # Safety
///
/// `trace` must be null or a live handle from [`fp_trace_read`].
#[no_mangle]
pub unsafe extern "C" fn fp_trace_fps(trace: *const FpTrace) -> f64 {
    unsafe { trace.as_ref() }.map_or(0.0, |t| t.0.fps)
}

/// Estimates a per-window heart-rate series from `trace` with the default
/// pipeline settings.
///
/// `method` is one of the [`FpMethod`] values (passed as its integer to
/// keep out-of-range inputs a checked error rather than undefined
/// behavior). On success writes the series handle to `*out`; the caller
/// releases it with [`fp_hr_series_free`].
///
/// # Safety
///
/// `trace` must be a live handle from [`fp_trace_read`] and `out` a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn fp_estimate(
    trace: *const FpTrace,
    method: u32,
    out: *mut *mut FpHrSeries,
) -> FpStatus {
    guarded(|| {
        let Some(trace) = (unsafe { trace.as_ref() }) else {
            return fail(FpStatus::NullArgument, "fp_estimate: null trace");
        };
        if out.is_null() {
            return fail(FpStatus::NullArgument, "fp_estimate: null out pointer");
        }
        let cfg = PipelineConfig::default();
        let run = match method {
            m if m == FpMethod::GreenBaseline as u32 => baseline_green(&trace.0, &cfg),
            m if m == FpMethod::AdaptiveNoTrack as u32 => estimate_session_argmax(&trace.0, &cfg),
            m if m == FpMethod::AdaptiveTracked as u32 => estimate_session(&trace.0, &cfg),
            other => {
                return fail(
                    FpStatus::InputError,
                    &format!("fp_estimate: unknown method id {other}"),
                );
            }
        };
        match run {
            Ok(series) => {
                unsafe { *out = Box::into_raw(Box::new(FpHrSeries(series))) };
                FpStatus::Ok
            }
            Err(err) => report(&err),
        }
    })
}

/// Number of windows in the series, or 0 if `series` is null.
///
/// # Safety
///
/// `series` must be null or a live handle from [`fp_estimate`].
#[no_mangle]
pub unsafe extern "C" fn fp_hr_series_len(series: *const FpHrSeries) -> usize {
    unsafe { series.as_ref() }.map_or(0, |s| s.0.len())
}

/// Copies the estimate at `index` into `*out`.
///
/// Returns `InputError` when `index` is out of range.
///
/// # Safety
///
/// `series` must be a live handle from [`fp_estimate`] and `out` a
/// writable [`FpEstimate`] slot.
#[no_mangle]
pub unsafe extern "C" fn fp_hr_series_get(
    series: *const FpHrSeries,
    index: usize,
    out: *mut FpEstimate,
) -> FpStatus {
    guarded(|| {
        let Some(series) = (unsafe { series.as_ref() }) else {
            return fail(FpStatus::NullArgument, "fp_hr_series_get: null series");
        };
        if out.is_null() {
            return fail(FpStatus::NullArgument, "fp_hr_series_get: null out pointer");
        }
        let Some(est) = series.0.estimates.get(index) else {
            return fail(
                FpStatus::InputError,
                &format!(
                    "fp_hr_series_get: index {index} out of range for {} windows",
                    series.0.len()
                ),
            );
        };
        unsafe { *out = estimate_of(est) };
        FpStatus::Ok
    })
}

/// Releases a series handle. Accepts null.
///
/// # Safety
///
/// `series` must be null or a handle from [`fp_estimate`] that has not
/// been freed already.
#[no_mangle]
pub unsafe extern "C" fn fp_hr_series_free(series: *mut FpHrSeries) {
    if !series.is_null() {
        drop(unsafe { Box::from_raw(series) });
    }
}
