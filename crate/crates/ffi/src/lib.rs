//! C ABI over the trainspeed toolkit.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`TsStatus`]
//! and, on failure, leaves a message for [`ts_last_error_message`].
//!
//! Functions that fill trace buffers take `(out_t, out_speed, capacity,
//! out_written)`. If `capacity` is too small nothing is copied,
//! `out_written` receives the required length and the call returns
//! `TS_STATUS_BUFFER_TOO_SMALL`, so passing null buffers with capacity 0 is
//! a size query.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use trainspeed::akf::{run_akf, AkfConfig};
use trainspeed::architectures::{predict_run, TrainedModel};
use trainspeed::eval::{rmse, Estimator, SpeedEstimateTrace, TraceEntry};
use trainspeed::signals::{load_runs, RunRole, TrainRun};
use trainspeed::simulator::make_benchmark_suite;
use trainspeed::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsRole {
    Train = 0,
    Validation = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsRunInfo {
    pub len: usize,
    pub has_wsp: bool,
    pub has_ground_truth: bool,
    pub role: TsRole,
}

/// A loaded or simulated set of runs.
pub struct TsRunSet {
    runs: Vec<TrainRun>,
}

/// A trained CNN checkpoint.
pub struct TsModel {
    model: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => TsStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => TsStatus::Parse,
            Error::Validation(_) | Error::Dimension(_) | Error::Config(_) => TsStatus::Validation,
            Error::Singular { .. } | Error::NonFinite(_) => TsStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: TsStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(TsStatus::NullPointer, format!("{what} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(TsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(TsStatus::NullPointer, format!("{what} is null")))
}

fn run_at(set: &TsRunSet, index: usize) -> Result<&TrainRun, Failure> {
    set.runs.get(index).ok_or_else(|| {
        fail(TsStatus::InvalidArgument, format!("run index {index} out of range ({} runs)", set.runs.len()))
    })
}

unsafe fn write_trace(
    trace: &SpeedEstimateTrace,
    out_t: *mut f64,
    out_speed: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> Result<(), Failure> {
    let written = out_ptr(out_written, "out_written")?;
    let n = trace.entries.len();
    *written = n;
    if capacity < n {
        return Err(fail(TsStatus::BufferTooSmall, format!("trace has {n} entries, buffer holds {capacity}")));
    }
    if n > 0 && (out_t.is_null() || out_speed.is_null()) {
        return Err(fail(TsStatus::NullPointer, "output buffer is null"));
    }
    for (i, e) in trace.entries.iter().enumerate() {
        *out_t.add(i) = e.t;
        *out_speed.add(i) = e.estimate;
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads runs from a signals CSV (and its metadata sidecar, if present).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_runs_load(path: *const c_char, out: *mut *mut TsRunSet) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = std::ptr::null_mut();
        let runs = load_runs(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(TsRunSet { runs }));
        Ok(())
    })
}

/// Simulates the 17-run benchmark suite.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_runs_benchmark_suite(seed: u64, out: *mut *mut TsRunSet) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(TsRunSet { runs: make_benchmark_suite(seed) }));
        Ok(())
    })
}

/// # Safety
/// `runs` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ts_runs_free(runs: *mut TsRunSet) {
    if !runs.is_null() {
        drop(Box::from_raw(runs));
    }
}

/// # Safety
/// `runs` must be a live handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_runs_count(runs: *const TsRunSet, out_count: *mut usize) -> TsStatus {
    guard(|| {
        let set = handle(runs, "runs")?;
        *out_ptr(out_count, "out_count")? = set.runs.len();
        Ok(())
    })
}

/// # Safety
/// `runs` must be a live handle; `out_info` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_run_info(runs: *const TsRunSet, index: usize, out_info: *mut TsRunInfo) -> TsStatus {
    guard(|| {
        let run = run_at(handle(runs, "runs")?, index)?;
        *out_ptr(out_info, "out_info")? = TsRunInfo {
            len: run.len(),
            has_wsp: run.has_wsp,
            has_ground_truth: run.has_ground_truth(),
            role: match run.role {
                RunRole::Train => TsRole::Train,
                RunRole::Validation => TsRole::Validation,
                RunRole::Test => TsRole::Test,
            },
        };
        Ok(())
    })
}

/// Copies the run id (NUL-terminated) into `buf`. `out_len` receives the
/// id length without the terminator.
///
/// # Safety
/// `runs` must be a live handle; `buf` must hold `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_run_id(
    runs: *const TsRunSet,
    index: usize,
    buf: *mut c_char,
    capacity: usize,
    out_len: *mut usize,
) -> TsStatus {
    guard(|| {
        let run = run_at(handle(runs, "runs")?, index)?;
        let bytes = run.run_id.as_bytes();
        *out_ptr(out_len, "out_len")? = bytes.len();
        if capacity < bytes.len() + 1 {
            return Err(fail(TsStatus::BufferTooSmall, format!("run id needs {} bytes", bytes.len() + 1)));
        }
        if buf.is_null() {
            return Err(fail(TsStatus::NullPointer, "buf is null"));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// Sample times and measured channels of one run. Missing ground truth is
/// written as NaN. Any of the three speed buffers may be null to skip it.
///
/// # Safety
/// `runs` must be a live handle; non-null buffers must hold `capacity`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_run_samples(
    runs: *const TsRunSet,
    index: usize,
    out_t: *mut f64,
    out_wheel: *mut f64,
    out_gps: *mut f64,
    out_truth: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> TsStatus {
    guard(|| {
        let run = run_at(handle(runs, "runs")?, index)?;
        let n = run.len();
        *out_ptr(out_written, "out_written")? = n;
        if capacity < n {
            return Err(fail(TsStatus::BufferTooSmall, format!("run has {n} samples, buffer holds {capacity}")));
        }
        if out_t.is_null() {
            return Err(fail(TsStatus::NullPointer, "out_t is null"));
        }
        for (i, s) in run.samples.iter().enumerate() {
            *out_t.add(i) = s.t;
            if !out_wheel.is_null() {
                *out_wheel.add(i) = s.wheel_speed;
            }
            if !out_gps.is_null() {
                *out_gps.add(i) = s.gps_speed;
            }
            if !out_truth.is_null() {
                *out_truth.add(i) = s.train_speed.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// Runs the adaptive Kalman filter over one run. `config_json` may be null
/// for the default configuration.
///
/// # Safety
/// `runs` must be a live handle; `config_json` null or NUL-terminated;
/// buffers as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn ts_akf_run(
    runs: *const TsRunSet,
    index: usize,
    config_json: *const c_char,
    out_t: *mut f64,
    out_speed: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> TsStatus {
    guard(|| {
        let run = run_at(handle(runs, "runs")?, index)?;
        let config: AkfConfig = if config_json.is_null() {
            AkfConfig::default()
        } else {
            let text = CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| fail(TsStatus::InvalidArgument, "config_json is not valid UTF-8"))?;
            serde_json::from_str(text).map_err(Error::from)?
        };
        let trace = run_akf(run, &config)?;
        write_trace(&trace, out_t, out_speed, capacity, out_written)
    })
}

/// Loads a checkpoint written by `trainspeed train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_model_load(path: *const c_char, out: *mut *mut TsModel) -> TsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = std::ptr::null_mut();
        let model = TrainedModel::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(TsModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(model: *mut TsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of past samples each prediction consumes.
///
/// # Safety
/// `model` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_model_history_len(model: *const TsModel, out_len: *mut usize) -> TsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_ptr(out_len, "out_len")? = m.model.config.history_len();
        Ok(())
    })
}

/// Sliding-window speed predictions (m/s) for one run.
///
/// # Safety
/// `model` and `runs` must be live handles; buffers as described in the
/// crate docs.
#[no_mangle]
pub unsafe extern "C" fn ts_model_predict(
    model: *const TsModel,
    runs: *const TsRunSet,
    index: usize,
    out_t: *mut f64,
    out_speed: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> TsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let run = run_at(handle(runs, "runs")?, index)?;
        let trace = predict_run(&m.model, run)?;
        write_trace(&trace, out_t, out_speed, capacity, out_written)
    })
}

/// RMSE of an estimate trace against the run's ground truth, over the
/// timestamps the two share.
///
/// # Safety
/// `runs` must be a live handle; `t` and `speed` must hold `len` doubles;
/// `out_rmse` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ts_rmse(
    runs: *const TsRunSet,
    index: usize,
    t: *const f64,
    speed: *const f64,
    len: usize,
    out_rmse: *mut f64,
) -> TsStatus {
    guard(|| {
        let run = run_at(handle(runs, "runs")?, index)?;
        let out = out_ptr(out_rmse, "out_rmse")?;
        if len > 0 && (t.is_null() || speed.is_null()) {
            return Err(fail(TsStatus::NullPointer, "trace buffer is null"));
        }
        let entries = (0..len).map(|i| TraceEntry { t: *t.add(i), estimate: *speed.add(i) }).collect();
        // The estimator label does not enter the RMSE.
        let trace = SpeedEstimateTrace { run_id: run.run_id.clone(), estimator: Estimator::Akf, entries };
        *out = rmse(&trace, run)?;
        Ok(())
    })
}
