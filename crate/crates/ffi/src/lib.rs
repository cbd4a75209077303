//! C ABI over the subboot engines, MSE model, moments and tuner.
//!
//! Every fallible function returns a [`SubbootStatus`]; on failure the message
//! is available from [`subboot_last_error`] on the same thread. Datasets and
//! estimators are opaque handles released with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use subboot::engines::{run_engine, EngineOptions, HyperParams, Method};
use subboot::estimators::{resolve_estimator, ColumnRoles};
use subboot::moments::{central_moments, CConstants, TildeConstants};
use subboot::msemodel::{predict_mse, ModelParams};
use subboot::tuner::{optimal_general_blb, optimal_general_linear, TunedParams};
use subboot::{Dataset, Error, Estimator, SeedSpec};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubbootStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Degenerate = 4,
    DataQuality = 5,
    InfeasibleBudget = 6,
    CalibrationFailed = 7,
    Contract = 8,
    Io = 9,
    UnknownName = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubbootMethod {
    Af = 0,
    Tb = 1,
    Blb = 2,
    Sb = 3,
    Sdb = 4,
}

impl From<SubbootMethod> for Method {
    fn from(m: SubbootMethod) -> Self {
        match m {
            SubbootMethod::Af => Method::Af,
            SubbootMethod::Tb => Method::Tb,
            SubbootMethod::Blb => Method::Blb,
            SubbootMethod::Sb => Method::Sb,
            SubbootMethod::Sdb => Method::Sdb,
        }
    }
}

/// Opaque dataset handle.
pub struct SubbootDataset(Dataset);

/// Opaque estimator handle bound to a dataset's column layout.
pub struct SubbootEstimator(Arc<dyn Estimator>);

/// Summary of one engine run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SubbootRunInfo {
    pub dim: usize,
    pub n: usize,
    pub r: usize,
    pub b: usize,
    pub skipped: usize,
    pub attempted: usize,
    pub seconds: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SubbootConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Moment constants of an estimator on a dataset. `tilde_valid` is 0 when
/// the kurtosis is degenerate and the tilde constants are unavailable.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SubbootMoments {
    pub p: usize,
    pub c: SubbootConstants,
    pub tilde_c1: f64,
    pub tilde_c2: f64,
    pub tilde_c3: f64,
    pub tilde_valid: i32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SubbootMsePrediction {
    pub total: f64,
    pub full: f64,
    pub resample: f64,
    pub subsample_replicate: f64,
    pub subsample_size: f64,
    pub replicate: f64,
    pub cross: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SubbootTuned {
    pub n: usize,
    pub r: usize,
    pub b: usize,
    pub objective: f64,
    pub predicted_time: f64,
    pub budget_slack: f64,
    /// Number of asymptotic-regime warnings raised by the tuner.
    pub warnings: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SubbootStatus {
    match e {
        Error::InvalidPopulation | Error::InvalidShape(_) | Error::Config(_) => SubbootStatus::InvalidArgument,
        Error::InvalidDataset(_) | Error::InsufficientData { .. } | Error::EmptyDataset(_) | Error::MissingColumn(_) => SubbootStatus::InvalidData,
        Error::DegenerateView
        | Error::RankDeficient(_)
        | Error::DegenerateCorrelation
        | Error::DegenerateInstrument
        | Error::Domain
        | Error::DegenerateKurtosis => SubbootStatus::Degenerate,
        Error::DataQuality { .. } => SubbootStatus::DataQuality,
        Error::InfeasibleBudget { .. } => SubbootStatus::InfeasibleBudget,
        Error::CalibrationFailed(_) => SubbootStatus::CalibrationFailed,
        Error::Contract(_) | Error::EmptyResults => SubbootStatus::Contract,
        Error::Unknown { .. } => SubbootStatus::UnknownName,
        Error::Write { .. } | Error::Io(_) | Error::Csv(_) => SubbootStatus::Io,
    }
}

struct Fail(SubbootStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> SubbootStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SubbootStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            set_error(&format!("internal panic: {msg}"));
            SubbootStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(SubbootStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn opt_str(p: *const c_char) -> Result<Option<String>, Fail> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(|s| Some(s.to_owned()))
        .map_err(|_| Fail(SubbootStatus::InvalidArgument, "string is not valid UTF-8".into()))
}

fn method_of(raw: i32) -> Result<SubbootMethod, Fail> {
    Ok(match raw {
        0 => SubbootMethod::Af,
        1 => SubbootMethod::Tb,
        2 => SubbootMethod::Blb,
        3 => SubbootMethod::Sb,
        4 => SubbootMethod::Sdb,
        other => return Err(Fail(SubbootStatus::InvalidArgument, format!("unknown method code {other}"))),
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn subboot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn subboot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies a row-major `rows`×`cols` matrix into a new dataset. `names` may be
/// null (columns become x0, x1, ...) or point to `cols` strings.
///
/// # Safety
/// `values` must point to `rows*cols` doubles; `names`, when non-null, to
/// `cols` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn subboot_dataset_new(
    values: *const f64,
    rows: usize,
    cols: usize,
    names: *const *const c_char,
    out_handle: *mut *mut SubbootDataset,
) -> SubbootStatus {
    guard(|| {
        let slot = out(out_handle)?;
        *slot = ptr::null_mut();
        if values.is_null() {
            return Err(null());
        }
        let len = rows.checked_mul(cols).ok_or_else(|| Fail(SubbootStatus::InvalidArgument, "shape overflows".into()))?;
        let vals = std::slice::from_raw_parts(values, len).to_vec();
        let columns = if names.is_null() {
            if cols == 1 {
                vec!["x".to_string()]
            } else {
                (0..cols).map(|j| format!("x{j}")).collect()
            }
        } else {
            (0..cols)
                .map(|j| opt_str(*names.add(j))?.ok_or_else(null))
                .collect::<Result<Vec<_>, Fail>>()?
        };
        let data = Dataset::new(columns, vals)?;
        *slot = Box::into_raw(Box::new(SubbootDataset(data)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`subboot_dataset_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subboot_dataset_free(handle: *mut SubbootDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn subboot_dataset_rows(handle: *const SubbootDataset) -> usize {
    handle.as_ref().map_or(0, |d| d.0.n_rows())
}

/// # Safety
/// `handle` must be a live dataset handle or null.
#[no_mangle]
pub unsafe extern "C" fn subboot_dataset_cols(handle: *const SubbootDataset) -> usize {
    handle.as_ref().map_or(0, |d| d.0.n_cols())
}

/// Resolves a registered estimator (`mean`, `ols`, `logit1`, `misscorr`,
/// `iv`) against `data`. `x` is a comma-separated column list; `x`, `y`, `z`
/// and `w` may each be null to use the defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `data` a live handle;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subboot_estimator_new(
    name: *const c_char,
    data: *const SubbootDataset,
    x: *const c_char,
    y: *const c_char,
    z: *const c_char,
    w: *const c_char,
    out_handle: *mut *mut SubbootEstimator,
) -> SubbootStatus {
    guard(|| {
        let slot = out(out_handle)?;
        *slot = ptr::null_mut();
        let name = opt_str(name)?.ok_or_else(null)?;
        let data = deref(data)?;
        let roles = ColumnRoles {
            x: opt_str(x)?.map(|s| s.split(',').map(|c| c.trim().to_string()).collect()),
            y: opt_str(y)?,
            z: opt_str(z)?,
            w: opt_str(w)?,
        };
        let est = resolve_estimator(&name, &roles, &data.0)?;
        *slot = Box::into_raw(Box::new(SubbootEstimator(est)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`subboot_estimator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn subboot_estimator_free(handle: *mut SubbootEstimator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live estimator handle or null.
#[no_mangle]
pub unsafe extern "C" fn subboot_estimator_dim(handle: *const SubbootEstimator) -> usize {
    handle.as_ref().map_or(0, |e| e.0.output_dim())
}

/// Runs one engine and writes the d×d covariance estimate, row-major, into
/// `matrix` (capacity `matrix_len`). `method` is a [`SubbootMethod`] code.
///
/// # Safety
/// Handles must be live; `matrix` must hold `matrix_len` doubles; `info` may
/// be null.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn subboot_run_engine(
    method: i32,
    data: *const SubbootDataset,
    estimator: *const SubbootEstimator,
    n: usize,
    r: usize,
    b: usize,
    seed: u64,
    workers: usize,
    matrix: *mut f64,
    matrix_len: usize,
    info: *mut SubbootRunInfo,
) -> SubbootStatus {
    guard(|| {
        let method: Method = method_of(method)?.into();
        let data = deref(data)?;
        let est = deref(estimator)?;
        if matrix.is_null() {
            return Err(null());
        }
        let d = est.0.output_dim();
        if matrix_len < d * d {
            return Err(Fail(SubbootStatus::BufferTooSmall, format!("matrix needs {} entries, got {matrix_len}", d * d)));
        }
        let opts = EngineOptions { workers: workers.max(1), ..EngineOptions::default() };
        let v = run_engine(method, &data.0, &est.0, HyperParams::new(n, r, b), SeedSpec::new(seed), &opts)?;
        std::slice::from_raw_parts_mut(matrix, d * d).copy_from_slice(&v.matrix);
        if let Some(info) = info.as_mut() {
            *info = SubbootRunInfo {
                dim: v.dim,
                n: v.params.n,
                r: v.params.r,
                b: v.params.b,
                skipped: v.skipped,
                attempted: v.attempted,
                seconds: v.seconds,
            };
        }
        Ok(())
    })
}

/// Moment constants of the estimator's per-row representation on `data`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn subboot_moments(
    data: *const SubbootDataset,
    estimator: *const SubbootEstimator,
    out_moments: *mut SubbootMoments,
) -> SubbootStatus {
    guard(|| {
        let data = deref(data)?;
        let est = deref(estimator)?;
        let slot = out(out_moments)?;
        let m = central_moments(&est.0.moment_representation(&data.0)?)?;
        let tilde = m.tuner_constants().ok();
        *slot = SubbootMoments {
            p: m.p,
            c: SubbootConstants { c1: m.c.c1, c2: m.c.c2, c3: m.c.c3, c4: m.c.c4 },
            tilde_c1: tilde.map_or(0.0, |t| t.c1),
            tilde_c2: tilde.map_or(0.0, |t| t.c2),
            tilde_c3: tilde.map_or(0.0, |t| t.c3),
            tilde_valid: tilde.is_some() as i32,
        };
        Ok(())
    })
}

/// Leading-order MSE of `method` at N = `big_n`. Pass 0 for parameters the
/// method does not take (AF: all; TB: n and r; SB/SDB: b).
///
/// # Safety
/// `constants` must be readable and `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn subboot_predict_mse(
    method: i32,
    big_n: usize,
    n: usize,
    r: usize,
    b: usize,
    constants: *const SubbootConstants,
    include_cross: i32,
    out_prediction: *mut SubbootMsePrediction,
) -> SubbootStatus {
    guard(|| {
        let method: Method = method_of(method)?.into();
        let c = deref(constants)?;
        let slot = out(out_prediction)?;
        let nz = |v: usize| (v > 0).then_some(v);
        let params = ModelParams { n: nz(n), r: nz(r), b: nz(b) };
        let p = predict_mse(method, big_n, params, &CConstants { c1: c.c1, c2: c.c2, c3: c.c3, c4: c.c4 }, include_cross != 0)?;
        *slot = SubbootMsePrediction {
            total: p.total,
            full: p.terms.full,
            resample: p.terms.resample,
            subsample_replicate: p.terms.subsample_replicate,
            subsample_size: p.terms.subsample_size,
            replicate: p.terms.replicate,
            cross: p.terms.cross,
        };
        Ok(())
    })
}

fn write_tuned(slot: &mut SubbootTuned, t: &TunedParams) {
    *slot = SubbootTuned {
        n: t.params.n,
        r: t.params.r,
        b: t.params.b,
        objective: t.objective,
        predicted_time: t.predicted_time,
        budget_slack: t.budget_slack,
        warnings: t.warnings.len(),
    };
}

/// BLB optimum for cost α1·n^γ·R·B + α2·n·R ≤ `c_max`. `n_override` = 0
/// selects n = ⌊N^0.7⌋.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn subboot_tune_blb(
    tilde_c1: f64,
    tilde_c2: f64,
    tilde_c3: f64,
    alpha1: f64,
    alpha2: f64,
    c_max: f64,
    big_n: usize,
    n_override: usize,
    gamma: f64,
    out_tuned: *mut SubbootTuned,
) -> SubbootStatus {
    guard(|| {
        let slot = out(out_tuned)?;
        let t = TildeConstants { c1: tilde_c1, c2: tilde_c2, c3: tilde_c3 };
        let tuned = optimal_general_blb(&t, alpha1, alpha2, c_max, big_n, (n_override > 0).then_some(n_override), gamma)?;
        write_tuned(slot, &tuned);
        Ok(())
    })
}

/// SB or SDB optimum for cost α·n^γ·R ≤ `c_max` with objective c1'/R + c2'/n².
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn subboot_tune_linear(
    method: i32,
    c1_prime: f64,
    c2_prime: f64,
    alpha: f64,
    c_max: f64,
    big_n: usize,
    gamma: f64,
    literal_replicates: i32,
    out_tuned: *mut SubbootTuned,
) -> SubbootStatus {
    guard(|| {
        let method: Method = method_of(method)?.into();
        let slot = out(out_tuned)?;
        let tuned = optimal_general_linear(method, c1_prime, c2_prime, alpha, c_max, big_n, gamma, literal_replicates != 0)?;
        write_tuned(slot, &tuned);
        Ok(())
    })
}
