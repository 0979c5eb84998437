//! C interface to `koopred`.
//!
//! Objects cross the boundary as opaque handles created by `kr_*_new`,
//! `kr_*_load` or `kr_fit*` and released with the matching `kr_*_free`.
//! Every fallible call returns a [`KrStatus`]; on failure the message is
//! available from [`kr_last_error`] on the same thread. Matrices are dense
//! row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use koopred::data::{noisy_dataset, Dataset};
use koopred::dictionary::{Dictionary, DictionaryTemplate};
use koopred::graphred::reduce_dictionary;
use koopred::koopman::{fit_dataset, KoopmanModel, Method, MethodSettings};
use koopred::Error;
use nalgebra::DMatrix;
use serde::Deserialize;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument was out of range or a buffer had the wrong length.
    InvalidArgument = 2,
    /// Malformed, inconsistent or insufficient input data.
    Data = 3,
    /// The numerical method failed (non-finite values, divergence).
    Numeric = 4,
    /// Bad configuration JSON or an impossible request.
    Config = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Identification method.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrMethod {
    /// Pseudoinverse least squares.
    Pinv = 1,
    /// Sequentially thresholded least squares.
    Stls = 2,
    /// Sparse Bayesian learning.
    Sbl = 3,
    /// Spike-and-slab variational Bayes.
    SpikeSlab = 4,
}

impl From<KrMethod> for Method {
    fn from(m: KrMethod) -> Self {
        match m {
            KrMethod::Pinv => Method::I,
            KrMethod::Stls => Method::II,
            KrMethod::Sbl => Method::III,
            KrMethod::SpikeSlab => Method::IV,
        }
    }
}

/// Opaque trajectory: states, inputs and sampling period.
pub struct KrDataset {
    inner: Dataset,
}

/// Opaque identified model.
pub struct KrModel {
    inner: KoopmanModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(KrStatus, String);

fn status_of(e: &Error) -> KrStatus {
    match e {
        Error::Config(_) | Error::Lookup(_) => KrStatus::Config,
        Error::Io(_) => KrStatus::Io,
        Error::Numeric(_)
        | Error::NonFinite { .. }
        | Error::Divergence { .. }
        | Error::Domain(_)
        | Error::DegenerateMetric(_) => KrStatus::Numeric,
        Error::Target { source, .. } => status_of(source),
        _ => KrStatus::Data,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure(KrStatus::NullPointer, format!("{what} is NULL"))
    }

    fn arg(msg: impl Into<String>) -> Self {
        Failure(KrStatus::InvalidArgument, msg.into())
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KrStatus::Ok
        }
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
            KrStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn copy_matrix(m: &DMatrix<f64>, buf: &mut [f64]) -> Result<(), Failure> {
    if buf.len() != m.len() {
        return Err(Failure::arg(format!("buffer holds {} values, matrix has {}", buf.len(), m.len())));
    }
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf[r * m.ncols() + c] = m[(r, c)];
        }
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next `kr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn kr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a `kr_*` function that hands over string ownership.
#[no_mangle]
pub unsafe extern "C" fn kr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a dataset from row-major buffers: `states` is `n_rows × n_states`,
/// `inputs` is `(n_rows - 1) × n_inputs` (may be NULL when `n_inputs` is 0).
///
/// # Safety
/// Buffers must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_dataset_new(
    states: *const f64,
    n_rows: usize,
    n_states: usize,
    inputs: *const f64,
    n_inputs: usize,
    dt: f64,
    out: *mut *mut KrDataset,
) -> KrStatus {
    guard(|| {
        if n_rows < 2 || n_states == 0 {
            return Err(Failure::arg("need at least 2 rows and 1 state"));
        }
        let x = slice(states, n_rows * n_states, "states")?;
        let u = slice(inputs, (n_rows - 1) * n_inputs, "inputs")?;
        let states = DMatrix::from_row_slice(n_rows, n_states, x);
        let inputs = DMatrix::from_row_slice(n_rows - 1, n_inputs, u);
        let inner = Dataset::new(states, inputs, dt, Vec::new())?;
        put(out, KrDataset { inner })
    })
}

/// Read a dataset CSV: the first `n_states` columns are states, the next
/// `n_inputs` inputs.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_dataset_load_csv(
    path: *const c_char,
    n_states: usize,
    n_inputs: usize,
    out: *mut *mut KrDataset,
) -> KrStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let inner = koopred::data::load_csv(path, n_states, n_inputs)?;
        put(out, KrDataset { inner })
    })
}

/// Copy of `data` with Gaussian measurement noise at `snr_db` on every state.
///
/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_dataset_add_noise(
    data: *const KrDataset,
    snr_db: f64,
    seed: u64,
    out: *mut *mut KrDataset,
) -> KrStatus {
    guard(|| {
        let d = borrow(data, "data")?;
        let inner = noisy_dataset(&d.inner, snr_db, seed)?;
        put(out, KrDataset { inner })
    })
}

/// Number of rows, states and inputs of a dataset. Any output may be NULL.
///
/// # Safety
/// `data` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kr_dataset_shape(
    data: *const KrDataset,
    n_rows: *mut usize,
    n_states: *mut usize,
    n_inputs: *mut usize,
) -> KrStatus {
    guard(|| {
        let d = &borrow(data, "data")?.inner;
        for (p, v) in [(n_rows, d.states().nrows()), (n_states, d.n_states()), (n_inputs, d.n_inputs())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_dataset_free(data: *mut KrDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FitOptions {
    dictionary: Option<DictionaryTemplate>,
    settings: MethodSettings,
}

/// Identify a model from `data`.
///
/// `options_json` may be NULL or a JSON object with optional keys
/// `dictionary` (kernel template; identity observables when absent) and
/// `settings` (solver settings and priors). `seed` drives kernel placement.
///
/// # Safety
/// `data` must be a live handle; `options_json` NULL or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_fit(
    data: *const KrDataset,
    method: KrMethod,
    options_json: *const c_char,
    seed: u64,
    out: *mut *mut KrModel,
) -> KrStatus {
    guard(|| {
        let d = &borrow(data, "data")?.inner;
        let opts: FitOptions = if options_json.is_null() {
            FitOptions::default()
        } else {
            serde_json::from_str(c_str(options_json, "options_json")?)
                .map_err(|e| Failure(KrStatus::Config, format!("options: {e}")))?
        };
        let dict = match &opts.dictionary {
            Some(t) => t.build(d, seed)?,
            None => Dictionary::identity(d.n_states(), d.n_inputs()),
        };
        let inner = fit_dataset(method.into(), &dict, d, &opts.settings, true)?;
        put(out, KrModel { inner })
    })
}

/// Prune the dictionary of a spike-and-slab model at `epsilon` and refit
/// `method` on the kept observables.
///
/// # Safety
/// `model` and `data` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_fit_reduced(
    model: *const KrModel,
    data: *const KrDataset,
    epsilon: f64,
    method: KrMethod,
    out: *mut *mut KrModel,
) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let d = &borrow(data, "data")?.inner;
        let gamma = m
            .gamma
            .as_ref()
            .ok_or_else(|| Failure(KrStatus::Config, "model carries no inclusion matrix".into()))?;
        let (dict, _) = reduce_dictionary(&m.dictionary, gamma, epsilon)?;
        let inner = fit_dataset(method.into(), &dict, d, &MethodSettings::default(), true)?;
        put(out, KrModel { inner })
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_model_load(path: *const c_char, out: *mut *mut KrModel) -> KrStatus {
    guard(|| {
        let inner = KoopmanModel::load(c_str(path, "path")?)?;
        put(out, KrModel { inner })
    })
}

/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_model_from_json(json: *const c_char, out: *mut *mut KrModel) -> KrStatus {
    guard(|| {
        let inner = KoopmanModel::from_json(c_str(json, "json")?)?;
        put(out, KrModel { inner })
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn kr_model_save(model: *const KrModel, path: *const c_char) -> KrStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        m.inner.save(c_str(path, "path")?)?;
        Ok(())
    })
}

/// Serialize a model; release the string with [`kr_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kr_model_to_json(model: *const KrModel, out: *mut *mut c_char) -> KrStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let text = m.inner.to_json()?;
        *out = CString::new(text).map_err(|e| Failure::arg(e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Dictionary size, input count and output count. Any output may be NULL.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kr_model_dims(
    model: *const KrModel,
    n_observables: *mut usize,
    n_inputs: *mut usize,
    n_outputs: *mut usize,
) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        for (p, v) in [
            (n_observables, m.dictionary.len()),
            (n_inputs, m.dictionary.n_inputs),
            (n_outputs, m.n_outputs()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copy the `(observables + inputs) × observables` operator into `buf`.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_model_operator(model: *const KrModel, buf: *mut f64, len: usize) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        copy_matrix(&m.k_f_hat, slice_mut(buf, len, "buf")?)
    })
}

/// Copy the inclusion-probability matrix (same shape as the operator).
/// Fails with `Config` for models from methods without one.
///
/// # Safety
/// `model` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_model_inclusion(model: *const KrModel, buf: *mut f64, len: usize) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let g = m
            .gamma
            .as_ref()
            .ok_or_else(|| Failure(KrStatus::Config, "model carries no inclusion matrix".into()))?;
        copy_matrix(g, slice_mut(buf, len, "buf")?)
    })
}

/// Predict the outputs one step ahead from state `x` and input `u`.
///
/// # Safety
/// `model` must be a live handle; buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn kr_model_step(
    model: *const KrModel,
    x: *const f64,
    nx: usize,
    u: *const f64,
    nu: usize,
    y: *mut f64,
    ny: usize,
) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let x = slice(x, nx, "x")?;
        let u = slice(u, nu, "u")?;
        let out = slice_mut(y, ny, "y")?;
        if ny != m.n_outputs() {
            return Err(Failure::arg(format!("y holds {ny} values, model has {} outputs", m.n_outputs())));
        }
        let (_, next) = m.one_step(x, u)?;
        out.copy_from_slice(next.as_slice());
        Ok(())
    })
}

/// One-step NMSE per output on `data`, written to `nmse` (`n_outputs` values).
///
/// # Safety
/// `model` and `data` must be live handles; `nmse` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kr_model_evaluate(
    model: *const KrModel,
    data: *const KrDataset,
    nmse: *mut f64,
    len: usize,
) -> KrStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let d = &borrow(data, "data")?.inner;
        let out = slice_mut(nmse, len, "nmse")?;
        let scores = m.evaluate(d)?;
        if scores.len() != len {
            return Err(Failure::arg(format!("nmse holds {len} values, model has {} outputs", scores.len())));
        }
        out.copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kr_model_free(model: *mut KrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
