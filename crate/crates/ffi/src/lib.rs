//! C ABI for the transfer fixed-lag interval smoother.
//!
//! Models and filters are opaque handles created and released through this
//! interface. Every function returns a [`TflisStatus`]; on failure a
//! description is available from [`tflis_last_error`] on the same thread.
//! Matrices are passed row-major. Output buffers come with a capacity, and
//! the required length is written back even when the buffer is too small.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use tflis::sdu::sequential_data_update;
use tflis::transfer::{tflis_init, tflis_step, TflisState, TflisStepOutput, TransferOptions};
use tflis::{Error, GaussianStats, StateSpaceModel, WishartStats};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TflisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotYetAvailable = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Validated linear-Gaussian state-space model.
pub struct TflisModel {
    model: StateSpaceModel,
}

/// Transfer smoother state plus the output of its most recent step.
pub struct TflisFilter {
    model: StateSpaceModel,
    state: TflisState,
    last: Option<TflisStepOutput>,
    steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    status: TflisStatus,
    message: String,
}

impl Failure {
    fn new(status: TflisStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => TflisStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => TflisStatus::DimensionMismatch,
            Error::NotYetAvailable { .. } => TflisStatus::NotYetAvailable,
        };
        Failure::new(status, e.to_string())
    }
}

type FfiResult = Result<(), Failure>;

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn guard(body: impl FnOnce() -> FfiResult) -> TflisStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            TflisStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            TflisStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(TflisStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn matrix(ptr: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Failure> {
    Ok(DMatrix::from_row_slice(rows, cols, input(ptr, rows * cols, what)?))
}

unsafe fn vector(ptr: *const f64, len: usize, what: &str) -> Result<DVector<f64>, Failure> {
    Ok(DVector::from_row_slice(input(ptr, len, what)?))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::new(TflisStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::new(TflisStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out(data: &[f64], out: *mut f64, capacity: usize, written: *mut usize) -> FfiResult {
    if written.is_null() {
        return Err(Failure::new(TflisStatus::NullPointer, "length output is null"));
    }
    *written = data.len();
    if capacity < data.len() {
        return Err(Failure::new(
            TflisStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} required", data.len()),
        ));
    }
    if !data.is_empty() {
        if out.is_null() {
            return Err(Failure::new(TflisStatus::NullPointer, "output buffer is null"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Description of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tflis_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds a model from row-major `A` (n×n), `B` (n×p), `C` (m×n), `Q` (n×n)
/// and the diagonal of `R` (m).
///
/// # Safety
/// Every array must hold the number of values implied by the dimensions, and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tflis_model_new(
    n_state: usize,
    n_input: usize,
    n_output: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    q: *const f64,
    r_diag: *const f64,
    out: *mut *mut TflisModel,
) -> TflisStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(TflisStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let model = StateSpaceModel::new(
            matrix(a, n_state, n_state, "A")?,
            matrix(b, n_state, n_input, "B")?,
            matrix(c, n_output, n_state, "C")?,
            matrix(q, n_state, n_state, "Q")?,
            DMatrix::from_diagonal(&vector(r_diag, n_output, "R diagonal")?),
        )?;
        *out = Box::into_raw(Box::new(TflisModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`tflis_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tflis_model_free(model: *mut TflisModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// The benchmark position/velocity system.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tflis_model_position_velocity(out: *mut *mut TflisModel) -> TflisStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(TflisStatus::NullPointer, "out is null"));
        }
        *out = Box::into_raw(Box::new(TflisModel { model: StateSpaceModel::position_velocity() }));
        Ok(())
    })
}

/// Creates a transfer smoother with lag `lag` and `iterations` variational
/// passes per step. `prior_cov` is row-major n×n, `sigma0` has m entries.
/// The model is copied; the handle may be freed afterwards.
///
/// # Safety
/// Arrays must be sized per the model's dimensions and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_new(
    model: *const TflisModel,
    prior_mean: *const f64,
    prior_cov: *const f64,
    sigma0: *const f64,
    nu0: f64,
    lag: usize,
    iterations: usize,
    out: *mut *mut TflisFilter,
) -> TflisStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(TflisStatus::NullPointer, "out is null"));
        }
        *out = ptr::null_mut();
        let model = handle(model, "model")?.model.clone();
        let n = model.n_state();
        let prior = GaussianStats::new(vector(prior_mean, n, "prior mean")?, matrix(prior_cov, n, n, "prior cov")?)?;
        let sigma0 = WishartStats::new(vector(sigma0, model.n_output(), "sigma0")?, nu0)?;
        let state = tflis_init(&model, prior, sigma0, lag, TransferOptions::with_iterations(iterations))?;
        *out = Box::into_raw(Box::new(TflisFilter { model, state, last: None, steps: 0 }));
        Ok(())
    })
}

/// # Safety
/// `filter` must come from [`tflis_filter_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_free(filter: *mut TflisFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Processes one step: input `u` (p values, the input applied after this
/// step's observations), target observation `y_target` and external
/// observation `y_external` (m values each). On failure the filter is left
/// unchanged.
///
/// # Safety
/// Arrays must be sized per the model's dimensions.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_step(
    filter: *mut TflisFilter,
    u: *const f64,
    y_target: *const f64,
    y_external: *const f64,
) -> TflisStatus {
    guard(|| {
        let f = handle_mut(filter, "filter")?;
        let u = vector(u, f.model.n_input(), "u")?;
        let y_t = vector(y_target, f.model.n_output(), "y_target")?;
        let y_e = vector(y_external, f.model.n_output(), "y_external")?;
        let (next, out) = tflis_step(&f.model, &f.state, &u, &y_t, &y_e)?;
        f.state = next;
        f.last = Some(out);
        f.steps += 1;
        Ok(())
    })
}

/// Number of steps processed so far.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_steps(filter: *const TflisFilter, out: *mut usize) -> TflisStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        *handle_mut(out, "out")? = f.steps;
        Ok(())
    })
}

fn last_output(f: &TflisFilter) -> Result<&TflisStepOutput, Failure> {
    f.last.as_ref().ok_or_else(|| Failure::new(TflisStatus::NotYetAvailable, "no step has been processed"))
}

/// Number of states in the most recent reported window.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_window_size(filter: *const TflisFilter, out: *mut usize) -> TflisStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        let last = last_output(f)?;
        *handle_mut(out, "out")? = last.reported.dim() / f.model.n_state();
        Ok(())
    })
}

/// State estimate `delay` steps behind the newest one, from the most recent
/// reported window. `delay = 0` is the filtered estimate, `delay = lag` the
/// smoothed one.
///
/// # Safety
/// `out` must hold `capacity` values and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_estimate(
    filter: *const TflisFilter,
    delay: usize,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TflisStatus {
    guard(|| {
        let f = handle(filter, "filter")?;
        let last = last_output(f)?;
        let n = f.model.n_state();
        let w = last.reported.dim() / n;
        if delay >= w {
            return Err(Failure::new(
                TflisStatus::NotYetAvailable,
                format!("delay {delay} outside the current window of {w} states"),
            ));
        }
        write_out(last.reported.mean.rows(delay * n, n).as_slice(), out, capacity, written)
    })
}

/// Mean of the most recent reported window, newest block first.
///
/// # Safety
/// `out` must hold `capacity` values and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_window_mean(
    filter: *const TflisFilter,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TflisStatus {
    guard(|| {
        let last = last_output(handle(filter, "filter")?)?;
        write_out(last.reported.mean.as_slice(), out, capacity, written)
    })
}

/// Row-major covariance of the most recent reported window.
///
/// # Safety
/// `out` must hold `capacity` values and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_window_cov(
    filter: *const TflisFilter,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TflisStatus {
    guard(|| {
        let last = last_output(handle(filter, "filter")?)?;
        write_out(&row_major(&last.reported.cov), out, capacity, written)
    })
}

/// Diagonal of the noise scale estimate from the most recent step.
///
/// # Safety
/// `out` must hold `capacity` values and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tflis_filter_xi_bar(
    filter: *const TflisFilter,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TflisStatus {
    guard(|| {
        let last = last_output(handle(filter, "filter")?)?;
        write_out(last.xi_bar.as_slice(), out, capacity, written)
    })
}

/// Sequential scalar-measurement update of `N(mean, cov)` with `m` rows of
/// `h` (row-major m×n), noise variances `gamma` and data `z`. Results go to
/// `mean_out` (n) and `cov_out` (n×n, row-major), which may alias the inputs.
///
/// # Safety
/// Arrays must be sized per `n` and `m`.
#[no_mangle]
pub unsafe extern "C" fn tflis_sdu(
    n: usize,
    m: usize,
    mean: *const f64,
    cov: *const f64,
    h: *const f64,
    gamma: *const f64,
    z: *const f64,
    mean_out: *mut f64,
    cov_out: *mut f64,
) -> TflisStatus {
    guard(|| {
        let prior = GaussianStats::new(vector(mean, n, "mean")?, matrix(cov, n, n, "cov")?)?;
        let post =
            sequential_data_update(&prior, &matrix(h, m, n, "h")?, &vector(gamma, m, "gamma")?, &vector(z, m, "z")?)?;
        let mut len = 0;
        write_out(post.mean.as_slice(), mean_out, n, &mut len)?;
        write_out(&row_major(&post.cov), cov_out, n * n, &mut len)
    })
}
