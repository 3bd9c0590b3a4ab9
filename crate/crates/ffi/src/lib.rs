//! C ABI over `pinn_battery`.
//!
//! Every function returns a [`PbStatus`]; on failure a message is available
//! from [`pb_last_error_message`] on the same thread. Models are opaque
//! handles released with [`pb_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pinn_battery::data::Task;
use pinn_battery::harness::{self, HarnessError, RunCheckpoint};
use pinn_battery::synth;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Data = 6,
    Training = 7,
    Panic = 8,
}

/// Task a model was trained for.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PbTask {
    Soh = 0,
    Rul = 1,
}

/// Trained model handle.
pub struct PbModel {
    inner: RunCheckpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(PbStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Usage(_) | HarnessError::ZeroLabel { .. } => PbStatus::InvalidArgument,
            HarnessError::MissingDataset(_) | HarnessError::Io { .. } => PbStatus::Io,
            HarnessError::Json(_) => PbStatus::Parse,
            HarnessError::Data(_) => PbStatus::Data,
            HarnessError::Pinn(_) => PbStatus::Training,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: PbStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(PbStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PbStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PbStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: non-null pointers are required to be valid for writes
    unsafe { p.as_mut() }.ok_or_else(|| fail(PbStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn model_arg<'a>(p: *const PbModel) -> Result<&'a PbModel, Failure> {
    p.as_ref().ok_or_else(|| fail(PbStatus::NullPointer, "`model` is null"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn box_model(inner: RunCheckpoint, out: *mut *mut PbModel) -> Result<(), Failure> {
    let slot = out_arg(out, "out")?;
    *slot = Box::into_raw(Box::new(PbModel { inner }));
    Ok(())
}

/// Loads a `checkpoint.json` written by a training run.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_model_load(path: *const c_char, out: *mut *mut PbModel) -> PbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let text = harness::read_text(Path::new(path))?;
        let ckpt: RunCheckpoint = serde_json::from_str(&text).map_err(|e| fail(PbStatus::Parse, e.to_string()))?;
        box_model(ckpt, out)
    })
}

/// Parses a checkpoint from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_model_from_json(json: *const c_char, out: *mut *mut PbModel) -> PbStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let ckpt: RunCheckpoint = serde_json::from_str(json).map_err(|e| fail(PbStatus::Parse, e.to_string()))?;
        box_model(ckpt, out)
    })
}

/// Trains from a TOML run config (as for `pinn-battery train`), writes the
/// run directory and returns the trained model.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_train_from_config(config_path: *const c_char, out: *mut *mut PbModel) -> PbStatus {
    guard(|| {
        let path = Path::new(str_arg(config_path, "config_path")?);
        let base = path.parent().unwrap_or(Path::new("."));
        let file = harness::parse_train_file(&harness::read_text(path)?, base)?;
        harness::train_to_dir(&file)?;
        let text = harness::read_text(&file.out.join("checkpoint.json"))?;
        let ckpt: RunCheckpoint = serde_json::from_str(&text).map_err(|e| fail(PbStatus::Parse, e.to_string()))?;
        box_model(ckpt, out)
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pb_model_free(model: *mut PbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of health features the model expects.
///
/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_model_features(model: *const PbModel, out: *mut usize) -> PbStatus {
    guard(|| {
        *out_arg(out, "out")? = model_arg(model)?.inner.model.features;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_model_task(model: *const PbModel, out: *mut PbTask) -> PbStatus {
    guard(|| {
        *out_arg(out, "out")? = match model_arg(model)?.inner.task {
            Task::Soh => PbTask::Soh,
            Task::Rul => PbTask::Rul,
        };
        Ok(())
    })
}

/// Prediction in label units (PCL for SoH models, cycles for RUL models)
/// from raw features and the cycle number.
///
/// # Safety
/// `x` must point to `n_features` doubles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_model_predict(
    model: *const PbModel,
    x: *const f64,
    n_features: usize,
    cycle: f64,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let m = model_arg(model)?;
        let x = slice_arg(x, n_features, "x")?;
        let v = m.inner.model.predict(x, cycle).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}

/// Predictions for `n_rows` rows of a row-major `n_rows x n_features` matrix.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles, `cycles` and `out` `n_rows` each.
#[no_mangle]
pub unsafe extern "C" fn pb_model_predict_batch(
    model: *const PbModel,
    x: *const f64,
    cycles: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let m = model_arg(model)?;
        let len = n_rows.checked_mul(n_features).ok_or_else(|| fail(PbStatus::InvalidArgument, "size overflow"))?;
        let x = slice_arg(x, len, "x")?;
        let t = slice_arg(cycles, n_rows, "cycles")?;
        if n_rows > 0 && out.is_null() {
            return Err(fail(PbStatus::NullPointer, "`out` is null"));
        }
        for i in 0..n_rows {
            let row = &x[i * n_features..(i + 1) * n_features];
            let v = m.inner.model.predict(row, t[i]).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
            *out.add(i) = v;
        }
        Ok(())
    })
}

unsafe fn metric(
    f: fn(&[f64], &[f64]) -> Result<f64, HarnessError>,
    predictions: *const f64,
    labels: *const f64,
    n: usize,
    out: *mut f64,
) -> PbStatus {
    guard(|| {
        let p = slice_arg(predictions, n, "predictions")?;
        let y = slice_arg(labels, n, "labels")?;
        *out_arg(out, "out")? = f(p, y)?;
        Ok(())
    })
}

/// # Safety
/// `predictions` and `labels` must hold `n` doubles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_rmse(predictions: *const f64, labels: *const f64, n: usize, out: *mut f64) -> PbStatus {
    metric(harness::rmse, predictions, labels, n, out)
}

/// RMSPE in percent; fails with `InvalidArgument` on a zero label.
///
/// # Safety
/// `predictions` and `labels` must hold `n` doubles; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_rmspe(predictions: *const f64, labels: *const f64, n: usize, out: *mut f64) -> PbStatus {
    metric(harness::rmspe, predictions, labels, n, out)
}

/// Closed-form logistic capacity loss with offset `c`; requires `c < u0 < k`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pb_logistic(t: f64, r: f64, k: f64, c: f64, u0: f64, out: *mut f64) -> PbStatus {
    guard(|| {
        let v = synth::logistic_closed_form(t, r, k, c, u0).map_err(|e| fail(PbStatus::InvalidArgument, e.to_string()))?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}
