use serde::{Deserialize, Serialize};

use super::{Coefficients, Dataset, ModelSpec};
use crate::distributions::{bb_kernel, bb_kernel_grad, binom_kernel, log_sum_exp2, Family};
use crate::error::{domain, Error, Result};
use crate::links::LinkKind;
use crate::special::ln_choose;

pub(crate) const LINKS: [LinkKind; 4] = [LinkKind::Logit, LinkKind::Log, LinkKind::Logit, LinkKind::ShiftedLog];

/// Per-row parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowParams {
    pub pi: f64,
    pub sigma: f64,
    pub delta: f64,
    pub eta: f64,
}

/// Precomputed design matrices and row constants for one dataset and model.
pub(crate) struct Evaluator<'a> {
    pub data: &'a Dataset,
    pub family: Family,
    /// Row-major design per block, intercept column first. Empty if unused.
    pub x: [Vec<f64>; 4],
    pub sizes: [usize; 4],
    ln_c: Vec<f64>,
}

/// Log-likelihood contribution of one row with derivatives with respect to
/// the four linear predictors, plus the contaminant posterior weight.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct RowEval {
    pub value: f64,
    pub d_lp: [f64; 4],
    pub weight: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a Dataset, spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let used = spec.used_blocks();
        let n = data.len();
        let mut x: [Vec<f64>; 4] = Default::default();
        let mut sizes = [0usize; 4];
        for b in 0..4 {
            if !used[b] {
                continue;
            }
            let mut cols = Vec::new();
            for term in spec.terms()[b] {
                cols.extend(data.resolve_term(term)?);
            }
            let p = cols.len() + 1;
            sizes[b] = p;
            let mut mat = Vec::with_capacity(n * p);
            for row in data.rows() {
                mat.push(1.0);
                mat.extend(cols.iter().map(|&j| row.covariates[j]));
            }
            x[b] = mat;
        }
        let ln_c = data.rows().iter().map(|r| ln_choose(r.m, r.y)).collect();
        Ok(Self { data, family: spec.family, x, sizes, ln_c })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn total_size(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn check(&self, c: &Coefficients) -> Result<()> {
        if c.sizes() != self.sizes {
            return Err(domain(format!(
                "coefficient block sizes {:?} do not match the model {:?}",
                c.sizes(),
                self.sizes
            )));
        }
        if c.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(domain("coefficients must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn design_row(&self, b: usize, i: usize) -> &[f64] {
        let p = self.sizes[b];
        &self.x[b][i * p..(i + 1) * p]
    }

    #[inline]
    pub fn predictor(&self, b: usize, i: usize, coef: &[f64]) -> f64 {
        if coef.is_empty() {
            return 0.0;
        }
        self.design_row(b, i).iter().zip(coef).map(|(x, c)| x * c).sum()
    }

    #[inline]
    pub fn row_params(&self, i: usize, blocks: [&[f64]; 4]) -> ([f64; 4], [f64; 4]) {
        let mut lp = [0.0; 4];
        let mut v = [0.0; 4];
        for b in 0..4 {
            lp[b] = self.predictor(b, i, blocks[b]);
            v[b] = LINKS[b].inverse(lp[b]);
        }
        (lp, v)
    }

    /// Row log-likelihood; derivatives are filled when `grad` is true.
    #[inline]
    pub fn row_eval(&self, i: usize, blocks: [&[f64]; 4], grad: bool) -> RowEval {
        let row = &self.data.rows()[i];
        let (y, m) = (row.y, row.m);
        let (lp, v) = self.row_params(i, blocks);
        let [pi, sigma, delta, eta] = v;
        let mut out = RowEval::default();
        let mut d = [0.0; 4];
        match self.family {
            Family::Binomial => {
                out.value = binom_kernel(y, m, pi);
                if grad {
                    d[0] = y as f64 / pi - (m - y) as f64 / (1.0 - pi);
                }
            }
            Family::BetaBinomial => {
                if grad {
                    let (val, dp, ds) = bb_kernel_grad(y, m, pi, sigma);
                    out.value = val;
                    d[0] = dp;
                    d[1] = ds;
                } else {
                    out.value = bb_kernel(y, m, pi, sigma);
                }
            }
            Family::ContaminatedBetaBinomial => {
                let (lr, lc, r, c) = if grad {
                    let r = bb_kernel_grad(y, m, pi, sigma);
                    let c = bb_kernel_grad(y, m, pi, eta * sigma);
                    (r.0, c.0, Some(r), Some(c))
                } else {
                    (bb_kernel(y, m, pi, sigma), bb_kernel(y, m, pi, eta * sigma), None, None)
                };
                let a = (-delta).ln_1p() + lr;
                let bc = delta.ln() + lc;
                let f = log_sum_exp2(a, bc);
                let w = (bc - f).exp();
                out.value = f;
                out.weight = w;
                if let (Some(r), Some(c)) = (r, c) {
                    d[0] = (1.0 - w) * r.1 + w * c.1;
                    d[1] = (1.0 - w) * r.2 + w * c.2 * eta;
                    d[2] = w / delta - (1.0 - w) / (1.0 - delta);
                    d[3] = w * c.2 * sigma;
                }
            }
        }
        if grad {
            for b in 0..4 {
                out.d_lp[b] = d[b] * LINKS[b].inverse_derivative(lp[b], v[b]);
            }
        }
        out
    }

    pub fn loglik(&self, c: &Coefficients) -> f64 {
        let blocks = c.blocks();
        (0..self.n()).map(|i| self.ln_c[i] + self.row_eval(i, blocks, false).value).sum()
    }

    /// Observed log-likelihood with its gradient in flat coefficient order.
    pub fn loglik_grad(&self, c: &Coefficients, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let blocks = c.blocks();
        let mut total = 0.0;
        for i in 0..self.n() {
            let r = self.row_eval(i, blocks, true);
            total += self.ln_c[i] + r.value;
            self.scatter(i, &r.d_lp, [1.0; 4], grad);
        }
        total
    }

    /// Adds `scale[b] * d_lp[b] * x_b(i)` into a flat gradient.
    #[inline]
    fn scatter(&self, i: usize, d_lp: &[f64; 4], scale: [f64; 4], grad: &mut [f64]) {
        let mut offset = 0;
        for b in 0..4 {
            let p = self.sizes[b];
            if p > 0 && scale[b] != 0.0 {
                let s = scale[b] * d_lp[b];
                for (g, x) in grad[offset..offset + p].iter_mut().zip(self.design_row(b, i)) {
                    *g += s * x;
                }
            }
            offset += p;
        }
    }

    /// Observed log-likelihood and contaminant posterior weights.
    pub fn posterior(&self, c: &Coefficients) -> (f64, Vec<f64>) {
        let blocks = c.blocks();
        let mut total = 0.0;
        let weights = (0..self.n())
            .map(|i| {
                let r = self.row_eval(i, blocks, false);
                total += self.ln_c[i] + r.value;
                r.weight
            })
            .collect();
        (total, weights)
    }

    /// Expected complete-data objective for (β, α, λ) given weights, without
    /// the ln C terms. When `grad` is given, receives the gradient in flat
    /// order (γ entries are left at zero).
    pub fn q2(&self, c: &Coefficients, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let blocks = c.blocks();
        let mut total = 0.0;
        for i in 0..self.n() {
            let row = &self.data.rows()[i];
            let (y, m) = (row.y, row.m);
            let (lp, v) = self.row_params(i, blocks);
            let [pi, sigma, _, eta] = v;
            let wi = w[i];
            if let Some(g) = grad.as_deref_mut() {
                let r = bb_kernel_grad(y, m, pi, sigma);
                let k = bb_kernel_grad(y, m, pi, eta * sigma);
                total += (1.0 - wi) * r.0 + wi * k.0;
                let d = [
                    ((1.0 - wi) * r.1 + wi * k.1) * LINKS[0].inverse_derivative(lp[0], pi),
                    ((1.0 - wi) * r.2 + wi * k.2 * eta) * LINKS[1].inverse_derivative(lp[1], sigma),
                    0.0,
                    wi * k.2 * sigma * LINKS[3].inverse_derivative(lp[3], eta),
                ];
                self.scatter(i, &d, [1.0, 1.0, 0.0, 1.0], g);
            } else {
                total += (1.0 - wi) * bb_kernel(y, m, pi, sigma) + wi * bb_kernel(y, m, pi, eta * sigma);
            }
        }
        total
    }
}

/// Per-row (π, σ, δ, η) implied by the coefficients. Parameters the family
/// does not model are reported at a zero linear predictor.
pub fn linear_predictors(data: &Dataset, spec: &ModelSpec, coeffs: &Coefficients) -> Result<Vec<RowParams>> {
    let ev = Evaluator::new(data, spec)?;
    ev.check(coeffs)?;
    let blocks = coeffs.blocks();
    Ok((0..ev.n())
        .map(|i| {
            let (_, [pi, sigma, delta, eta]) = ev.row_params(i, blocks);
            RowParams { pi, sigma, delta, eta }
        })
        .collect())
}

pub fn observed_log_likelihood(data: &Dataset, spec: &ModelSpec, coeffs: &Coefficients) -> Result<f64> {
    let ev = Evaluator::new(data, spec)?;
    ev.check(coeffs)?;
    let l = ev.loglik(coeffs);
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::Evaluation(format!("log-likelihood is {l}")))
    }
}
