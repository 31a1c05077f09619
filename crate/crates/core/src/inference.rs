//! Post-fit inference: Hessian standard errors, information criteria and
//! likelihood-ratio tests.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::Family;
use crate::error::{domain, Result};
use crate::regression::{Coefficients, Dataset, Evaluator, FitResult, ModelSpec};
use crate::special::chi_square_survival;

/// Linear predictors beyond this magnitude sit on a flat stretch of the
/// inverse link; SEs for the block are flagged as unreliable.
pub const UNRELIABLE_PREDICTOR: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
}

/// AIC = 2k − 2l, BIC = ln(n)k − 2l, HQIC = 2 ln(ln n)k − 2l.
pub fn information_criteria(log_likelihood: f64, k: usize, n: usize) -> InformationCriteria {
    let k = k as f64;
    let n = n as f64;
    let dev = -2.0 * log_likelihood;
    InformationCriteria {
        aic: 2.0 * k + dev,
        bic: n.ln() * k + dev,
        hqic: if k == 0.0 { dev } else { 2.0 * n.ln().ln() * k + dev },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Likelihood-ratio test of a nested null model against an alternative.
/// Small negative statistics from optimizer noise are clamped to zero.
pub fn lr_test(loglik_null: f64, loglik_alt: f64, df: u32) -> Result<LrTestResult> {
    if df == 0 {
        return Err(domain("LR test needs df >= 1"));
    }
    if !loglik_null.is_finite() || !loglik_alt.is_finite() {
        return Err(domain("log-likelihoods must be finite"));
    }
    let statistic = (-2.0 * (loglik_null - loglik_alt)).max(0.0);
    let p_value = chi_square_survival(statistic, df)?;
    Ok(LrTestResult { statistic, df, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: Family,
    pub k: usize,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    /// 1 is best (smallest criterion); ties share the better rank.
    pub aic_rank: usize,
    pub bic_rank: usize,
    pub hqic_rank: usize,
}

fn ranks(values: &[f64]) -> Vec<usize> {
    values.iter().map(|v| 1 + values.iter().filter(|w| *w < v).count()).collect()
}

/// Information criteria for competing fits on the same data, with ranks.
pub fn compare_models(fits: &[&FitResult]) -> Vec<ComparisonRow> {
    let ics: Vec<InformationCriteria> =
        fits.iter().map(|f| information_criteria(f.log_likelihood, f.n_parameters(), f.n_obs)).collect();
    let aic = ranks(&ics.iter().map(|c| c.aic).collect::<Vec<_>>());
    let bic = ranks(&ics.iter().map(|c| c.bic).collect::<Vec<_>>());
    let hqic = ranks(&ics.iter().map(|c| c.hqic).collect::<Vec<_>>());
    fits.iter()
        .zip(&ics)
        .enumerate()
        .map(|(j, (f, c))| ComparisonRow {
            family: f.family,
            k: f.n_parameters(),
            log_likelihood: f.log_likelihood,
            aic: c.aic,
            bic: c.bic,
            hqic: c.hqic,
            aic_rank: aic[j],
            bic_rank: bic[j],
            hqic_rank: hqic[j],
        })
        .collect()
}

/// Per-coordinate central-difference step.
pub fn fd_step(theta: f64) -> f64 {
    (1e-4 * theta.abs()).max(1e-5)
}

/// Central finite-difference Hessian of `f` at `theta`, symmetric by
/// construction.
pub fn numerical_hessian(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64]) -> DMatrix<f64> {
    let k = theta.len();
    let h: Vec<f64> = theta.iter().map(|&t| fd_step(t)).collect();
    let f0 = f(theta);
    let mut x = theta.to_vec();
    let mut hess = DMatrix::zeros(k, k);
    for j in 0..k {
        x[j] = theta[j] + h[j];
        let up = f(&x);
        x[j] = theta[j] - h[j];
        let dn = f(&x);
        x[j] = theta[j];
        hess[(j, j)] = (up - 2.0 * f0 + dn) / (h[j] * h[j]);
    }
    for j in 0..k {
        for l in 0..j {
            let mut corner = |sj: f64, sl: f64| {
                x[j] = theta[j] + sj * h[j];
                x[l] = theta[l] + sl * h[l];
                let v = f(&x);
                x[j] = theta[j];
                x[l] = theta[l];
                v
            };
            let v =
                (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h[j] * h[l]);
            hess[(j, l)] = v;
            hess[(l, j)] = v;
        }
    }
    hess
}

/// Standard errors from a log-likelihood Hessian: sqrt(diag((−H)⁻¹)).
/// Returns `None` when −H is not positive definite, together with the
/// condition number of −H (infinite if singular).
pub fn standard_errors_from_hessian(hessian: &DMatrix<f64>) -> (Option<Vec<f64>>, f64) {
    let neg = -hessian.clone();
    if neg.iter().any(|v| !v.is_finite()) {
        return (None, f64::INFINITY);
    }
    let eig = SymmetricEigen::new(neg.clone()).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let Some(chol) = neg.cholesky() else {
        return (None, condition);
    };
    let inv = chol.inverse();
    let se: Vec<f64> = (0..inv.nrows()).map(|j| inv[(j, j)].sqrt()).collect();
    if se.iter().all(|v| v.is_finite()) {
        (Some(se), condition)
    } else {
        (None, condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub labels: Vec<String>,
    pub estimates: Vec<f64>,
    /// Omitted when the negative Hessian is not positive definite.
    pub standard_errors: Option<Vec<f64>>,
    /// Per-coefficient flag for SEs on a near-flat stretch of the link.
    pub unreliable: Vec<bool>,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_parameters: usize,
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub hessian_ok: bool,
    pub condition_number: f64,
}

/// Hessian-based standard errors and information criteria for a fit.
pub fn standard_errors(data: &Dataset, spec: &ModelSpec, fit: &FitResult) -> Result<InferenceReport> {
    let ev = Evaluator::new(data, spec)?;
    ev.check(&fit.coefficients)?;
    if !fit.converged {
        log::warn!("computing standard errors for a fit that did not converge");
    }
    let theta = fit.coefficients.to_flat();
    let hess = numerical_hessian(|x| ev.loglik(&Coefficients::from_flat(ev.sizes, x)), &theta);
    let (ses, condition_number) = standard_errors_from_hessian(&hess);

    let blocks = fit.coefficients.blocks();
    let mut unreliable = Vec::with_capacity(theta.len());
    for b in 0..4 {
        let flat = (0..ev.n()).any(|i| ev.predictor(b, i, blocks[b]).abs() > UNRELIABLE_PREDICTOR);
        unreliable.extend(std::iter::repeat(flat).take(ev.sizes[b]));
    }

    let k = theta.len();
    let ic = information_criteria(fit.log_likelihood, k, fit.n_obs);
    Ok(InferenceReport {
        labels: fit.labels.clone(),
        estimates: theta,
        hessian_ok: ses.is_some(),
        standard_errors: ses,
        unreliable,
        log_likelihood: fit.log_likelihood,
        n_obs: fit.n_obs,
        n_parameters: k,
        aic: ic.aic,
        bic: ic.bic,
        hqic: ic.hqic,
        condition_number,
    })
}
