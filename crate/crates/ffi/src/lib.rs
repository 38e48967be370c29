//! C ABI over the detector: opaque handles, integer status codes, and a
//! thread-local error message. The declarations live in `include/seizr.h`;
//! a test keeps the header and the exported symbols in sync.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use seizr::error::Error;
use seizr::infer::{sliding_predict, PredictionTrace, TRACE_RATE};
use seizr::model::{load_weights, Model, ModelConfig, Variant};
use seizr::signal::{preprocess, Recording};

pub const SEIZR_OK: i32 = 0;
pub const SEIZR_ERR_NULL_POINTER: i32 = 1;
pub const SEIZR_ERR_INVALID_ARGUMENT: i32 = 2;
pub const SEIZR_ERR_INVALID_DATA: i32 = 3;
pub const SEIZR_ERR_UNSUPPORTED_RATE: i32 = 4;
pub const SEIZR_ERR_IO: i32 = 5;
pub const SEIZR_ERR_INTERNAL: i32 = 6;

/// Loaded model behind a `seizr_detector*` handle.
pub struct SeizrDetector {
    model: Model,
}

/// One recording's inference output behind a `seizr_prediction*` handle.
pub struct SeizrPrediction {
    trace: PredictionTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::default());
}

fn status_of(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => SEIZR_ERR_INVALID_ARGUMENT,
        Error::InvalidData(_) | Error::Shape(_) | Error::Json(_) => SEIZR_ERR_INVALID_DATA,
        Error::UnsupportedRate(_) => SEIZR_ERR_UNSUPPORTED_RATE,
        Error::Io(_) => SEIZR_ERR_IO,
        Error::Diverged { .. } => SEIZR_ERR_INTERNAL,
    }
}

fn fail(code: i32, msg: &str) -> i32 {
    set_error(msg);
    code
}

fn fail_with(err: &Error) -> i32 {
    fail(status_of(err), &err.to_string())
}

/// Runs a body that may touch foreign pointers, converting panics into a
/// status instead of unwinding across the boundary.
fn guarded(body: impl FnOnce() -> i32) -> i32 {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail(SEIZR_ERR_INTERNAL, "internal panic"),
    }
}

unsafe fn utf8_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail(SEIZR_ERR_NULL_POINTER, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SEIZR_ERR_INVALID_ARGUMENT, &format!("{what} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seizr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the last failure on this thread; empty after a success.
/// The pointer stays valid until the next seizr call on the same thread.
#[no_mangle]
pub extern "C" fn seizr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a detector from a weights file written by the trainer.
#[no_mangle]
pub unsafe extern "C" fn seizr_detector_open(
    weights_path: *const c_char,
    out: *mut *mut SeizrDetector,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "out is null");
        }
        let path = match utf8_arg(weights_path, "weights_path") {
            Ok(p) => p,
            Err(code) => return code,
        };
        match load_weights(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SeizrDetector { model }));
                SEIZR_OK
            }
            Err(err) => fail_with(&err),
        }
    })
}

/// Builds a freshly initialized detector ("nano" .. "xl") from a seed.
/// Mainly useful for integration tests and benchmarks.
#[no_mangle]
pub unsafe extern "C" fn seizr_detector_create(
    variant: *const c_char,
    seed: u64,
    out: *mut *mut SeizrDetector,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "out is null");
        }
        let name = match utf8_arg(variant, "variant") {
            Ok(n) => n,
            Err(code) => return code,
        };
        let Some(v) = Variant::from_name(name) else {
            return fail(
                SEIZR_ERR_INVALID_ARGUMENT,
                &format!("unknown variant `{name}`; use nano|small|medium|large|xl"),
            );
        };
        match Model::build(ModelConfig::variant(v), seed) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SeizrDetector { model }));
                SEIZR_OK
            }
            Err(err) => fail_with(&err),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn seizr_detector_free(det: *mut SeizrDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Scalar parameter count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn seizr_detector_params(det: *const SeizrDetector) -> u64 {
    match det.as_ref() {
        Some(d) => d.model.param_count(),
        None => 0,
    }
}

/// Writes the NUL-terminated variant name ("nano", "custom(d2,w3)", ...) into
/// the caller's buffer of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn seizr_detector_variant(
    det: *const SeizrDetector,
    buf: *mut c_char,
    len: usize,
) -> i32 {
    guarded(|| {
        let Some(d) = det.as_ref() else {
            return fail(SEIZR_ERR_NULL_POINTER, "detector is null");
        };
        if buf.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "buf is null");
        }
        let name = d.model.config().variant_name();
        if len < name.len() + 1 {
            return fail(
                SEIZR_ERR_INVALID_ARGUMENT,
                &format!("buffer of {len} bytes too small for {} + NUL", name.len()),
            );
        }
        std::ptr::copy_nonoverlapping(name.as_ptr() as *const c_char, buf, name.len());
        *buf.add(name.len()) = 0;
        SEIZR_OK
    })
}

/// Runs the full pipeline (band-pass, resample to 64 Hz, artifact rejection,
/// sliding windows, smoothing, channel-max) over channel-major samples:
/// channel `c` occupies `samples[c * n_samples .. (c + 1) * n_samples]`.
/// Supported rates: 64, 200, 256, 500 Hz. `threshold` is in [0, 1].
#[no_mangle]
pub unsafe extern "C" fn seizr_detector_predict(
    det: *const SeizrDetector,
    samples: *const f32,
    n_channels: usize,
    n_samples: usize,
    rate_hz: u32,
    threshold: f64,
    out: *mut *mut SeizrPrediction,
) -> i32 {
    guarded(|| {
        let Some(d) = det.as_ref() else {
            return fail(SEIZR_ERR_NULL_POINTER, "detector is null");
        };
        if samples.is_null() || out.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "samples or out is null");
        }
        let Some(total) = n_channels
            .checked_mul(n_samples)
            .filter(|&t| t > 0 && t <= isize::MAX as usize / std::mem::size_of::<f32>())
        else {
            return fail(
                SEIZR_ERR_INVALID_ARGUMENT,
                &format!("bad buffer extent: {n_channels} channels x {n_samples} samples"),
            );
        };
        let flat = std::slice::from_raw_parts(samples, total);
        let channels: Vec<Vec<f64>> = (0..n_channels)
            .map(|c| flat[c * n_samples..(c + 1) * n_samples].iter().map(|&v| v as f64).collect())
            .collect();
        let names = (0..n_channels).map(|c| format!("ch{c:02}")).collect();
        let run = Recording::new("ffi".into(), rate_hz, names, channels)
            .and_then(|rec| preprocess(&rec))
            .and_then(|pre| sliding_predict(&d.model, &pre, threshold));
        match run {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(SeizrPrediction { trace }));
                SEIZR_OK
            }
            Err(err) => fail_with(&err),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_free(pred: *mut SeizrPrediction) {
    if !pred.is_null() {
        drop(Box::from_raw(pred));
    }
}

/// Recording length in seconds, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_duration_s(pred: *const SeizrPrediction) -> f64 {
    match pred.as_ref() {
        Some(p) => p.trace.duration_s,
        None => 0.0,
    }
}

/// Samples per second of the probability trace (constant).
#[no_mangle]
pub extern "C" fn seizr_prediction_trace_rate() -> u32 {
    TRACE_RATE as u32
}

/// Length of the global probability trace; 0 when the recording was shorter
/// than one model window (or the handle is null).
#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_trace_len(pred: *const SeizrPrediction) -> usize {
    match pred.as_ref() {
        Some(p) => p.trace.global_smoothed.len(),
        None => 0,
    }
}

/// Copies the smoothed global probability trace into `out`; `len` must equal
/// seizr_prediction_trace_len().
#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_trace(
    pred: *const SeizrPrediction,
    out: *mut f64,
    len: usize,
) -> i32 {
    guarded(|| {
        let Some(p) = pred.as_ref() else {
            return fail(SEIZR_ERR_NULL_POINTER, "prediction is null");
        };
        if out.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "out is null");
        }
        let trace = &p.trace.global_smoothed;
        if len != trace.len() {
            return fail(
                SEIZR_ERR_INVALID_ARGUMENT,
                &format!("buffer holds {len} values, trace has {}", trace.len()),
            );
        }
        std::ptr::copy_nonoverlapping(trace.as_ptr(), out, trace.len());
        SEIZR_OK
    })
}

/// Number of detected global events, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_event_count(pred: *const SeizrPrediction) -> usize {
    match pred.as_ref() {
        Some(p) => p.trace.global_events.len(),
        None => 0,
    }
}

/// Onset and offset (seconds from recording start) of event `index`.
#[no_mangle]
pub unsafe extern "C" fn seizr_prediction_event(
    pred: *const SeizrPrediction,
    index: usize,
    onset_s: *mut f64,
    offset_s: *mut f64,
) -> i32 {
    guarded(|| {
        let Some(p) = pred.as_ref() else {
            return fail(SEIZR_ERR_NULL_POINTER, "prediction is null");
        };
        if onset_s.is_null() || offset_s.is_null() {
            return fail(SEIZR_ERR_NULL_POINTER, "onset_s or offset_s is null");
        }
        let Some(event) = p.trace.global_events.get(index) else {
            return fail(
                SEIZR_ERR_INVALID_ARGUMENT,
                &format!("event {index} out of range ({} events)", p.trace.global_events.len()),
            );
        };
        *onset_s = event.onset_s;
        *offset_s = event.offset_s;
        SEIZR_OK
    })
}
