//! C interface to `smc-core`.
//!
//! Matrices, masks and solver results cross the boundary as opaque handles
//! created and destroyed by this library. Every fallible function returns an
//! [`SmcStatus`]; on failure a description is available from
//! [`smc_last_error_message`] on the same thread. Dense data is exchanged in
//! row-major order.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smc_core::exact::{solve_structured_irls_exact, solve_structured_nnm};
use smc_core::generators::{add_noise, gen_low_rank_sparse, normalize_spectral, GeneratorSpec, NoiseSpec};
use smc_core::harness::{relative_error, SolverSettings};
use smc_core::linalg::DenseMatrix;
use smc_core::rng::rng_from_seed;
use smc_core::sampling::{degrees_of_freedom_ratio, structured_sample, ObservationMask};
use smc_core::sirls::solve_sirls;
use smc_core::structured::solve_structured_sirls;
use smc_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmcStatus {
    Ok = 0,
    InvalidParameter = 1,
    DimensionMismatch = 2,
    NonFinite = 3,
    Numerical = 4,
    Parse = 5,
    Io = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmcSolver {
    Sirls = 0,
    StructuredSirls = 1,
    StructuredNnm = 2,
    IrlsExact = 3,
}

/// Solver parameters. Start from [`smc_solver_options_default`] and change
/// the fields of interest.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcSolverOptions {
    pub p: f64,
    pub q: f64,
    /// Sparsity weight of the exact solvers.
    pub alpha: f64,
    pub tol: f64,
    /// 0 keeps each solver's own default.
    pub max_iter: usize,
    /// Known rank; 0 estimates it every iteration.
    pub rank: usize,
    pub sparsity_steps: usize,
    pub lowrank_steps: usize,
    pub seed: u64,
}

pub struct SmcMatrix(DenseMatrix);

pub struct SmcMask(ObservationMask);

pub struct SmcSolveResult {
    x: SmcMatrix,
    iterations: usize,
    converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SmcStatus {
    match err {
        Error::InvalidParameter(_) => SmcStatus::InvalidParameter,
        Error::DimensionMismatch { .. } => SmcStatus::DimensionMismatch,
        Error::NonFinite { .. } => SmcStatus::NonFinite,
        Error::Numerical(_) => SmcStatus::Numerical,
        Error::Parse { .. } => SmcStatus::Parse,
        Error::Io(_) => SmcStatus::Io,
    }
}

struct Failure(SmcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(SmcStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SmcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SmcStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next call into this library.
#[no_mangle]
pub extern "C" fn smc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a `rows × cols` matrix from row-major `data`, or a zero matrix when
/// `data` is null.
///
/// # Safety
/// `data` must be null or point to `rows * cols` readable doubles; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut SmcMatrix,
) -> SmcStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(SmcStatus::InvalidParameter, "matrix too large".into()))?;
        let m = if data.is_null() {
            DenseMatrix::zeros(rows, cols)
        } else {
            DenseMatrix::new(rows, cols, std::slice::from_raw_parts(data, len).to_vec())?
        };
        store(out, SmcMatrix(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smc_matrix_free(m: *mut SmcMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn smc_matrix_rows(m: *const SmcMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn smc_matrix_cols(m: *const SmcMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries in row-major order into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn smc_matrix_copy_data(m: *const SmcMatrix, out: *mut f64, len: usize) -> SmcStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let data = m.0.as_slice();
        if len != data.len() {
            return Err(Failure(
                SmcStatus::DimensionMismatch,
                format!("buffer holds {len} values, matrix has {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, len);
        Ok(())
    })
}

/// Creates a mask from row-major flags (nonzero = observed).
///
/// # Safety
/// `flags` must point to `rows * cols` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn smc_mask_new(
    rows: usize,
    cols: usize,
    flags: *const u8,
    out: *mut *mut SmcMask,
) -> SmcStatus {
    guard(|| {
        if flags.is_null() {
            return Err(null("flags"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(SmcStatus::InvalidParameter, "mask too large".into()))?;
        let flags = std::slice::from_raw_parts(flags, len);
        let mask = ObservationMask::from_fn(rows, cols, |i, j| flags[i * cols + j] != 0);
        store(out, SmcMask(mask))
    })
}

/// # Safety
/// `mask` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smc_mask_free(mask: *mut SmcMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live mask handle.
#[no_mangle]
pub unsafe extern "C" fn smc_mask_observed_count(mask: *const SmcMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.observed_count())
}

/// Writes 1 for observed and 0 for missing entries, row-major.
///
/// # Safety
/// `mask` must be a live handle and `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn smc_mask_copy_flags(mask: *const SmcMask, out: *mut u8, len: usize) -> SmcStatus {
    guard(|| {
        let mask = &deref(mask, "mask")?.0;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let (rows, cols) = mask.shape();
        if len != rows * cols {
            return Err(Failure(
                SmcStatus::DimensionMismatch,
                format!("buffer holds {len} values, mask has {}", rows * cols),
            ));
        }
        let out = std::slice::from_raw_parts_mut(out, len);
        for i in 0..rows {
            for j in 0..cols {
                out[i * cols + j] = u8::from(mask.is_observed(i, j));
            }
        }
        Ok(())
    })
}

/// Product of an `m × r` and an `r × n` factor whose entries are zero with
/// the given probabilities and uniform on `[0, 1)` otherwise.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_generate(
    m: usize,
    n: usize,
    r: usize,
    zero_frac_left: f64,
    zero_frac_right: f64,
    seed: u64,
    out: *mut *mut SmcMatrix,
) -> SmcStatus {
    guard(|| {
        let spec = GeneratorSpec {
            zero_frac_left,
            zero_frac_right,
            ..GeneratorSpec::new(m, n, r, seed)
        };
        store(out, SmcMatrix(gen_low_rank_sparse(&spec)?))
    })
}

/// Divides by the spectral norm.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_normalize_spectral(m: *const SmcMatrix, out: *mut *mut SmcMatrix) -> SmcStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        store(out, SmcMatrix(normalize_spectral(&m.0)?))
    })
}

/// Observes exact zeros of `m` at `rate_zero` and the other entries at
/// `rate_nonzero`, independently per entry.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_structured_sample(
    m: *const SmcMatrix,
    rate_zero: f64,
    rate_nonzero: f64,
    seed: u64,
    out: *mut *mut SmcMask,
) -> SmcStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let mask = structured_sample(&m.0, rate_zero, rate_nonzero, 0.0, &mut rng_from_seed(seed))?;
        store(out, SmcMask(mask))
    })
}

/// Adds Gaussian noise of relative size `epsilon` on the observed entries.
///
/// # Safety
/// `m` and `mask` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_add_noise(
    m: *const SmcMatrix,
    mask: *const SmcMask,
    epsilon: f64,
    seed: u64,
    out: *mut *mut SmcMatrix,
) -> SmcStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let mask = deref(mask, "mask")?;
        store(out, SmcMatrix(add_noise(&m.0, &mask.0, &NoiseSpec { epsilon, seed })?))
    })
}

#[no_mangle]
pub extern "C" fn smc_solver_options_default() -> SmcSolverOptions {
    let s = SolverSettings::default();
    SmcSolverOptions {
        p: s.sirls.p,
        q: s.structured.q,
        alpha: s.exact.alpha,
        tol: s.sirls.tol,
        max_iter: 0,
        rank: 0,
        sparsity_steps: s.structured.sparsity_steps,
        lowrank_steps: s.structured.lowrank_steps,
        seed: 0,
    }
}

fn settings_from(o: &SmcSolverOptions) -> SolverSettings {
    let mut s = SolverSettings::default().with_rank((o.rank > 0).then_some(o.rank));
    s.sirls.p = o.p;
    s.sirls.tol = o.tol;
    s.sirls.seed = o.seed;
    s.structured.lowrank.p = o.p;
    s.structured.lowrank.tol = o.tol;
    s.structured.lowrank.seed = o.seed;
    s.structured.q = o.q;
    s.structured.sparsity_steps = o.sparsity_steps;
    s.structured.lowrank_steps = o.lowrank_steps;
    s.exact.p = o.p;
    s.exact.q = o.q;
    s.exact.alpha = o.alpha;
    s.exact.tol = o.tol;
    s.nnm.alpha = o.alpha;
    if o.max_iter > 0 {
        s.sirls.max_iter = o.max_iter;
        s.structured.lowrank.max_iter = o.max_iter;
        s.exact.max_iter = o.max_iter;
        s.nnm.max_iter = o.max_iter;
    }
    s
}

/// Completes `m_obs` from the entries marked in `mask`. A null `options`
/// uses the defaults.
///
/// # Safety
/// `m_obs` and `mask` must be live handles, `options` null or valid, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_solve(
    solver: SmcSolver,
    m_obs: *const SmcMatrix,
    mask: *const SmcMask,
    options: *const SmcSolverOptions,
    out: *mut *mut SmcSolveResult,
) -> SmcStatus {
    guard(|| {
        let m = &deref(m_obs, "matrix")?.0;
        let mask = &deref(mask, "mask")?.0;
        let opts = options.as_ref().copied().unwrap_or_else(|| smc_solver_options_default());
        let s = settings_from(&opts);
        let (x, iterations, converged) = match solver {
            SmcSolver::Sirls => {
                let r = solve_sirls(m, mask, &s.sirls)?;
                (r.x_hat, r.iterations, r.converged)
            }
            SmcSolver::StructuredSirls => {
                let r = solve_structured_sirls(m, mask, &s.structured)?;
                (r.x_hat, r.iterations, r.converged)
            }
            SmcSolver::IrlsExact => {
                let r = solve_structured_irls_exact(m, mask, &s.exact)?;
                (r.x_hat, r.iterations, r.converged)
            }
            SmcSolver::StructuredNnm => {
                let r = solve_structured_nnm(m, mask, &s.nnm)?;
                (r.x, r.iterations, r.converged)
            }
        };
        store(
            out,
            SmcSolveResult {
                x: SmcMatrix(x),
                iterations,
                converged,
            },
        )
    })
}

/// Completed matrix, owned by the result.
///
/// # Safety
/// `r` must be a live result handle; the returned pointer dies with it.
#[no_mangle]
pub unsafe extern "C" fn smc_result_matrix(r: *const SmcSolveResult) -> *const SmcMatrix {
    r.as_ref().map_or(ptr::null(), |r| &r.x as *const SmcMatrix)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn smc_result_iterations(r: *const SmcSolveResult) -> usize {
    r.as_ref().map_or(0, |r| r.iterations)
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn smc_result_converged(r: *const SmcSolveResult) -> bool {
    r.as_ref().is_some_and(|r| r.converged)
}

/// # Safety
/// `r` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smc_result_free(r: *mut SmcSolveResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// `‖reference − x‖_F / ‖reference‖_F`.
///
/// # Safety
/// Both matrices must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_relative_error(
    reference: *const SmcMatrix,
    x: *const SmcMatrix,
    out: *mut f64,
) -> SmcStatus {
    guard(|| {
        let e = relative_error(&deref(reference, "reference")?.0, &deref(x, "matrix")?.0)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = e;
        Ok(())
    })
}

/// `r(m + n − r) / observed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smc_degrees_of_freedom_ratio(
    m: usize,
    n: usize,
    r: usize,
    observed: usize,
    out: *mut f64,
) -> SmcStatus {
    guard(|| {
        let v = degrees_of_freedom_ratio(m, n, r, observed)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = v;
        Ok(())
    })
}
