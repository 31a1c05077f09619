//! C ABI for cbbreg.
//!
//! Every fallible function returns a `CbbStatus`; on failure the message is
//! available from `cbb_last_error_message` on the same thread. Datasets and
//! fits are opaque handles released with their `_free` functions. Panics are
//! caught at the boundary and reported as `CBB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cbbreg::distributions::{self as dist, BbParams, BoundedCount, CbbParams, Family, MomentSet};
use cbbreg::formula::Formula;
use cbbreg::inference::{information_criteria, lr_test, standard_errors, InferenceReport};
use cbbreg::io::{read_dataset, CsvSchema, Trials};
use cbbreg::regression::{fit, Dataset, FitControl, FitResult, ModelSpec, Row};
use cbbreg::Error;

pub const CBB_FAMILY_BINOMIAL: u32 = 0;
pub const CBB_FAMILY_BETA_BINOMIAL: u32 = 1;
pub const CBB_FAMILY_CONTAMINATED_BETA_BINOMIAL: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Schema = 4,
    EmptyData = 5,
    Evaluation = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CbbMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CbbCriteria {
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CbbFitOptions {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct CbbDataset {
    data: Dataset,
}

/// Opaque handle to a fitted model with its standard errors.
pub struct CbbFit {
    result: FitResult,
    report: InferenceReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CbbStatus {
    match e {
        Error::Domain(_) | Error::TooManyFailures { .. } => CbbStatus::Domain,
        Error::Schema(_) => CbbStatus::Schema,
        Error::EmptyData => CbbStatus::EmptyData,
        Error::Evaluation(_) => CbbStatus::Evaluation,
        Error::Io { .. } | Error::Json(_) => CbbStatus::Io,
        Error::Parse { .. } | Error::Csv { .. } | Error::Formula { .. } => CbbStatus::Parse,
    }
}

struct Fail(CbbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CbbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CbbStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CbbStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CbbStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CbbStatus::InvalidArgument, msg.into())
}

fn family(code: u32) -> Result<Family, Fail> {
    match code {
        CBB_FAMILY_BINOMIAL => Ok(Family::Binomial),
        CBB_FAMILY_BETA_BINOMIAL => Ok(Family::BetaBinomial),
        CBB_FAMILY_CONTAMINATED_BETA_BINOMIAL => Ok(Family::ContaminatedBetaBinomial),
        _ => Err(invalid(format!("unknown family code {code}"))),
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn cbb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Log-probability of `y` out of `m`. Parameters a family does not use are
/// ignored.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn cbb_log_pmf(
    family_code: u32,
    y: u64,
    m: u64,
    pi: f64,
    sigma: f64,
    delta: f64,
    eta: f64,
    out: *mut f64,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let obs = BoundedCount::new(y, m)?;
        *out = match family(family_code)? {
            Family::Binomial => dist::binom_log_pmf(obs, pi)?,
            Family::BetaBinomial => dist::bb_log_pmf(obs, &BbParams::new(pi, sigma)?),
            Family::ContaminatedBetaBinomial => dist::cbb_log_pmf(obs, &CbbParams::new(pi, sigma, delta, eta)?),
        };
        Ok(())
    })
}

/// Closed-form mean, variance, skewness and excess kurtosis.
///
/// # Safety
/// `out` must be a valid pointer to a `CbbMoments`.
#[no_mangle]
pub unsafe extern "C" fn cbb_moments(
    family_code: u32,
    m: u64,
    pi: f64,
    sigma: f64,
    delta: f64,
    eta: f64,
    out: *mut CbbMoments,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let MomentSet { mean, variance, skewness, excess_kurtosis } = match family(family_code)? {
            Family::Binomial => dist::binom_moments(m, pi)?,
            Family::BetaBinomial => dist::bb_moments(m, &BbParams::new(pi, sigma)?)?,
            Family::ContaminatedBetaBinomial => dist::cbb_moments(m, &CbbParams::new(pi, sigma, delta, eta)?)?,
        };
        *out = CbbMoments { mean, variance, skewness, excess_kurtosis };
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer to a `CbbCriteria`.
#[no_mangle]
pub unsafe extern "C" fn cbb_information_criteria(
    log_likelihood: f64,
    k: usize,
    n: usize,
    out: *mut CbbCriteria,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ic = information_criteria(log_likelihood, k, n);
        *out = CbbCriteria { aic: ic.aic, bic: ic.bic, hqic: ic.hqic };
        Ok(())
    })
}

/// # Safety
/// `statistic` and `p_value` must be valid pointers to doubles.
#[no_mangle]
pub unsafe extern "C" fn cbb_lr_test(
    loglik_null: f64,
    loglik_alt: f64,
    df: u32,
    statistic: *mut f64,
    p_value: *mut f64,
) -> CbbStatus {
    guard(|| {
        let statistic = out_ref(statistic, "statistic")?;
        let p_value = out_ref(p_value, "p_value")?;
        let r = lr_test(loglik_null, loglik_alt, df)?;
        *statistic = r.statistic;
        *p_value = r.p_value;
        Ok(())
    })
}

/// Builds a dataset from column arrays. `x` holds `n * p` covariates in
/// row-major order and `names` the `p` covariate names; both may be null
/// when `p` is 0.
///
/// # Safety
/// `y` and `m` must point to `n` values, `x` to `n * p` values, `names` to
/// `p` NUL-terminated strings, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbb_dataset_new(
    n: usize,
    y: *const u64,
    m: *const u64,
    p: usize,
    x: *const f64,
    names: *const *const c_char,
    out: *mut *mut CbbDataset,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        if n > 0 && (y.is_null() || m.is_null()) {
            return Err(null("y or m"));
        }
        if p > 0 && (x.is_null() || names.is_null()) {
            return Err(null("x or names"));
        }
        let columns =
            (0..p).map(|j| c_str(*names.add(j), "column name").map(str::to_string)).collect::<Result<Vec<_>, _>>()?;
        let rows = (0..n)
            .map(|i| Row { y: *y.add(i), m: *m.add(i), covariates: (0..p).map(|j| *x.add(i * p + j)).collect() })
            .collect();
        let data = Dataset::new(columns, rows)?;
        *out = Box::into_raw(Box::new(CbbDataset { data }));
        Ok(())
    })
}

/// Reads a CSV file with a header row. `trials_column` may be null, in
/// which case every row uses `constant_m`. `covariates` and `factors` name
/// numeric and categorical columns.
///
/// # Safety
/// String arguments must be NUL-terminated; `covariates` must point to
/// `n_covariates` strings and `factors` to `n_factors` strings (either may be
/// null when its count is 0); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbb_dataset_read_csv(
    path: *const c_char,
    response: *const c_char,
    trials_column: *const c_char,
    constant_m: u64,
    covariates: *const *const c_char,
    n_covariates: usize,
    factors: *const *const c_char,
    n_factors: usize,
    out: *mut *mut CbbDataset,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let path = c_str(path, "path")?;
        let response = c_str(response, "response")?;
        let trials = if trials_column.is_null() {
            Trials::Constant(constant_m)
        } else {
            Trials::Column(c_str(trials_column, "trials_column")?.to_string())
        };
        let list = |p: *const *const c_char, k: usize, what: &str| -> Result<Vec<String>, Fail> {
            if k > 0 && p.is_null() {
                return Err(null(what));
            }
            (0..k).map(|j| c_str(*p.add(j), what).map(str::to_string)).collect()
        };
        let mut schema = CsvSchema::new(response, trials);
        schema.covariates = list(covariates, n_covariates, "covariates")?;
        schema.categorical = list(factors, n_factors, "factors")?;
        let data = read_dataset(Path::new(path), &schema)?;
        *out = Box::into_raw(Box::new(CbbDataset { data }));
        Ok(())
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn cbb_dataset_len(data: *const CbbDataset) -> usize {
    data.as_ref().map_or(0, |d| d.data.len())
}

/// # Safety
/// `data` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbb_dataset_free(data: *mut CbbDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

#[no_mangle]
pub extern "C" fn cbb_fit_options_default() -> CbbFitOptions {
    let c = FitControl::default();
    CbbFitOptions { epsilon: c.epsilon, max_iterations: c.max_iterations, restarts: c.restarts, seed: c.seed }
}

unsafe fn terms(p: *const c_char, what: &str) -> Result<Vec<String>, Fail> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    let f: Formula = c_str(p, what)?.parse()?;
    Ok(f.terms)
}

/// Fits a model. Each formula is a right-hand side such as "~ x + z"; a
/// null formula means intercept-only. Formulas for parameters the family
/// does not have must be null or "~ 1". `options` may be null for defaults.
/// Standard errors are computed as part of the fit.
///
/// # Safety
/// `data` must be a live dataset handle, strings NUL-terminated, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit(
    data: *const CbbDataset,
    family_code: u32,
    pi: *const c_char,
    sigma: *const c_char,
    delta: *const c_char,
    eta: *const c_char,
    options: *const CbbFitOptions,
    out: *mut *mut CbbFit,
) -> CbbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let data = &data.as_ref().ok_or_else(|| null("data"))?.data;
        let spec = ModelSpec {
            family: family(family_code)?,
            pi_terms: terms(pi, "pi")?,
            sigma_terms: terms(sigma, "sigma")?,
            delta_terms: terms(delta, "delta")?,
            eta_terms: terms(eta, "eta")?,
        };
        let o = options.as_ref().copied().unwrap_or_else(|| cbb_fit_options_default());
        let control = FitControl {
            epsilon: o.epsilon,
            max_iterations: o.max_iterations,
            restarts: o.restarts,
            seed: o.seed,
            ..FitControl::default()
        };
        let result = fit(data, &spec, None, &control)?;
        let report = standard_errors(data, &spec, &result)?;
        *out = Box::into_raw(Box::new(CbbFit { result, report }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_free(fit: *mut CbbFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Maximized log-likelihood, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_log_likelihood(fit: *const CbbFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.log_likelihood)
}

/// 1 if converged, 0 if not, -1 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_converged(fit: *const CbbFit) -> c_int {
    fit.as_ref().map_or(-1, |f| c_int::from(f.result.converged))
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_iterations(fit: *const CbbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.iterations)
}

/// Number of coefficients (β, α, γ, λ concatenated).
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_n_coefficients(fit: *const CbbFit) -> usize {
    fit.as_ref().map_or(0, |f| f.result.n_parameters())
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < values.len() {
        return Err(Fail(CbbStatus::BufferTooSmall, format!("buffer holds {len}, need {}", values.len())));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copies the coefficients into `buf`, which must hold at least
/// `cbb_fit_n_coefficients` values.
///
/// # Safety
/// `fit` must be a live handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_coefficients(fit: *const CbbFit, buf: *mut f64, len: usize) -> CbbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        copy_out(&f.result.coefficients.to_flat(), buf, len)
    })
}

/// Copies standard errors into `buf` and sets `*hessian_ok`. When the
/// negative Hessian is not positive definite, `*hessian_ok` is 0 and `buf`
/// is filled with NaN.
///
/// # Safety
/// `fit` must be a live handle, `buf` must point to `len` doubles and
/// `hessian_ok` to an int.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_standard_errors(
    fit: *const CbbFit,
    buf: *mut f64,
    len: usize,
    hessian_ok: *mut c_int,
) -> CbbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let ok = out_ref(hessian_ok, "hessian_ok")?;
        let k = f.result.n_parameters();
        match &f.report.standard_errors {
            Some(se) => {
                *ok = 1;
                copy_out(se, buf, len)
            }
            None => {
                *ok = 0;
                copy_out(&vec![f64::NAN; k], buf, len)
            }
        }
    })
}

/// Copies the posterior contaminant probabilities, one per row. For B and
/// BB fits nothing is written and `*written` is 0.
///
/// # Safety
/// `fit` must be a live handle, `buf` must point to `len` doubles and
/// `written` to a size_t.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_posterior_weights(
    fit: *const CbbFit,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CbbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let written = out_ref(written, "written")?;
        let w = &f.result.posterior_weights;
        copy_out(w, buf, len)?;
        *written = w.len();
        Ok(())
    })
}

/// AIC, BIC and HQIC of a fit.
///
/// # Safety
/// `fit` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cbb_fit_criteria(fit: *const CbbFit, out: *mut CbbCriteria) -> CbbStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let out = out_ref(out, "out")?;
        *out = CbbCriteria { aic: f.report.aic, bic: f.report.bic, hqic: f.report.hqic };
        Ok(())
    })
}
