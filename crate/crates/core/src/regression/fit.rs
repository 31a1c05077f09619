use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{coefficient_labels, Coefficients, Dataset, Evaluator, ModelSpec};
use crate::distributions::Family;
use crate::error::{domain, Error, Result};
use crate::links::{logit, SIGMA_MIN};
use crate::optim::{bfgs_warm, nelder_mead, MinimizeOptions};

/// Bounds for the closed-form δ update.
const DELTA_FLOOR: f64 = 1e-10;
const DELTA_START: f64 = 0.05;
const ETA_START: f64 = 1.5;
const JITTER_SD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerOptimizer {
    Simplex,
    QuasiNewton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitControl {
    /// EM stops once the log-likelihood gain of an iteration drops below this.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub inner_optimizer: InnerOptimizer,
    /// Relative objective tolerance of the inner maximizations.
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    /// Extra EM runs from jittered starting values.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitControl {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_iterations: 1000,
            inner_optimizer: InnerOptimizer::QuasiNewton,
            inner_tolerance: 1e-12,
            inner_max_iterations: 200,
            restarts: 0,
            seed: 0,
        }
    }
}

impl FitControl {
    fn inner_options(&self) -> MinimizeOptions {
        MinimizeOptions {
            max_iter: self.inner_max_iterations,
            f_tol: self.inner_tolerance,
            g_tol: 1e-7,
            initial_step: 0.1,
        }
    }
}

/// Set when some row's parameter lies within 1e-9 (relative) of the edge of
/// its admissible range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlags {
    pub pi: bool,
    pub sigma: bool,
    pub delta: bool,
    pub eta: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.pi || self.sigma || self.delta || self.eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub coefficients: Coefficients,
    /// Coefficient labels in flat order.
    pub labels: Vec<String>,
    pub log_likelihood: f64,
    /// Posterior contaminant probabilities (cBB only; empty otherwise).
    pub posterior_weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Observed log-likelihood after each EM iteration, starting value first.
    pub trace: Vec<f64>,
    pub boundary: BoundaryFlags,
    pub n_obs: usize,
}

impl FitResult {
    pub fn n_parameters(&self) -> usize {
        self.coefficients.len()
    }
}

/// Posterior probability that each row came from the contaminant.
pub fn e_step(data: &Dataset, spec: &ModelSpec, coeffs: &Coefficients) -> Result<Vec<f64>> {
    require_cbb(spec)?;
    let ev = Evaluator::new(data, spec)?;
    ev.check(coeffs)?;
    let (l, w) = ev.posterior(coeffs);
    if !l.is_finite() {
        return Err(Error::Evaluation(format!("log-likelihood is {l}")));
    }
    Ok(w)
}

/// Maximizes the δ part of the expected complete-data log-likelihood.
pub fn m_step_gamma(data: &Dataset, spec: &ModelSpec, weights: &[f64], previous: &[f64]) -> Result<Vec<f64>> {
    require_cbb(spec)?;
    let ev = Evaluator::new(data, spec)?;
    check_weights(&ev, weights)?;
    if previous.len() != ev.sizes[2] {
        return Err(domain("previous gamma has the wrong length"));
    }
    Ok(gamma_step(&ev, weights, previous))
}

/// Maximizes the (β, α, λ) part of the expected complete-data
/// log-likelihood, warm-started at `current`. γ is carried over unchanged.
pub fn m_step_q2(
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
    current: &Coefficients,
    control: &FitControl,
) -> Result<Coefficients> {
    require_cbb(spec)?;
    let ev = Evaluator::new(data, spec)?;
    check_weights(&ev, weights)?;
    ev.check(current)?;
    Ok(q2_step(&ev, weights, current, control, &mut Vec::new()))
}

/// EM starting values: the BB-RM fit for β and α, δ = 0.05 and η = 1.5.
pub fn initialize(data: &Dataset, spec: &ModelSpec, control: &FitControl) -> Result<Coefficients> {
    require_cbb(spec)?;
    let ev = Evaluator::new(data, spec)?;
    let bb = fit_direct(data, &spec.restricted_to(Family::BetaBinomial), None, control)?;
    Ok(cbb_start(&bb.coefficients, ev.sizes, DELTA_START))
}

/// Maximum-likelihood fit. B-RM and BB-RM are maximized directly; cBB-RM
/// runs EM, by default from the BB-RM solution.
pub fn fit(data: &Dataset, spec: &ModelSpec, init: Option<&Coefficients>, control: &FitControl) -> Result<FitResult> {
    if !(control.epsilon > 0.0) || control.max_iterations == 0 {
        return Err(domain("epsilon must be positive and max_iterations at least 1"));
    }
    if let Some(c) = init {
        Evaluator::new(data, spec)?.check(c)?;
    }
    match spec.family {
        Family::ContaminatedBetaBinomial => fit_cbb(data, spec, init, control),
        _ => fit_direct(data, spec, init, control),
    }
}

fn require_cbb(spec: &ModelSpec) -> Result<()> {
    if spec.family == Family::ContaminatedBetaBinomial {
        Ok(())
    } else {
        Err(domain("EM steps apply to the cBB family only"))
    }
}

fn check_weights(ev: &Evaluator, w: &[f64]) -> Result<()> {
    if w.len() != ev.n() {
        return Err(domain(format!("{} weights for {} rows", w.len(), ev.n())));
    }
    if w.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(domain("weights must lie in [0, 1]"));
    }
    Ok(())
}

fn cbb_start(bb: &Coefficients, sizes: [usize; 4], delta: f64) -> Coefficients {
    let mut c = Coefficients::zeros(sizes);
    c.beta.copy_from_slice(&bb.beta);
    c.alpha.copy_from_slice(&bb.alpha);
    c.gamma[0] = logit(delta);
    c.lambda[0] = (ETA_START - 1.0).ln();
    c
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Newton-Raphson with step halving for Σ aᵢ ln pᵢ + bᵢ ln(1 − pᵢ),
/// pᵢ = logistic(xᵢ·θ), using the design of `block`. Returns the estimate and
/// the number of accepted steps.
fn weighted_logistic(ev: &Evaluator, block: usize, a: &[f64], b: &[f64], start: &[f64]) -> (Vec<f64>, usize) {
    let p = ev.sizes[block];
    let n = ev.n();
    let objective = |theta: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let t = ev.predictor(block, i, theta);
                -a[i] * softplus(-t) - b[i] * softplus(t)
            })
            .sum()
    };
    let mut theta = start.to_vec();
    let mut obj = objective(&theta);
    let mut steps = 0;
    for _ in 0..200 {
        let mut g = DVector::<f64>::zeros(p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let x = ev.design_row(block, i);
            let t = ev.predictor(block, i, &theta);
            let pr = crate::links::logistic(t);
            let resid = a[i] - (a[i] + b[i]) * pr;
            let curv = (a[i] + b[i]) * pr * (1.0 - pr);
            for j in 0..p {
                g[j] += resid * x[j];
                for k in 0..=j {
                    h[(j, k)] += curv * x[j] * x[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                h[(k, j)] = h[(j, k)];
            }
        }
        let scale = h.diagonal().amax().max(1e-300);
        let dir = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                let ridge = h + DMatrix::identity(p, p) * (1e-10 * scale);
                match ridge.cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => break,
                }
            }
        };
        if dir.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            let o = objective(&cand);
            if o >= obj {
                accepted = Some((cand, o));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, o)) = accepted else { break };
        let gain = o - obj;
        let moved = dir.amax() * step;
        theta = cand;
        obj = o;
        steps += 1;
        if gain <= 1e-13 * (1.0 + obj.abs()) || moved < 1e-10 {
            break;
        }
    }
    (theta, steps)
}

fn gamma_step(ev: &Evaluator, w: &[f64], previous: &[f64]) -> Vec<f64> {
    let n = ev.n() as f64;
    if ev.sizes[2] == 1 {
        let mean = w.iter().sum::<f64>() / n;
        if mean <= 0.0 || mean >= 1.0 {
            log::warn!("mean posterior weight is {mean}; clamping delta");
        }
        return vec![logit(mean.clamp(DELTA_FLOOR, 1.0 - DELTA_FLOOR))];
    }
    let b: Vec<f64> = w.iter().map(|v| 1.0 - v).collect();
    weighted_logistic(ev, 2, w, &b, previous).0
}

fn minimize(
    control: &FitControl,
    x0: &[f64],
    inverse_hessian: &mut Vec<f64>,
    mut fg: impl FnMut(&[f64], Option<&mut [f64]>) -> f64,
) -> crate::optim::Minimum {
    let opts = control.inner_options();
    match control.inner_optimizer {
        InnerOptimizer::QuasiNewton => bfgs_warm(|x, g| fg(x, Some(g)), x0, &opts, inverse_hessian),
        InnerOptimizer::Simplex => nelder_mead(|x| fg(x, None), x0, &opts),
    }
}

// `inverse_hessian` carries the BFGS state from one EM iteration to the next.
fn q2_step(
    ev: &Evaluator,
    w: &[f64],
    current: &Coefficients,
    control: &FitControl,
    inverse_hessian: &mut Vec<f64>,
) -> Coefficients {
    let s = ev.sizes;
    let freeze_lambda = w.iter().sum::<f64>() < 1e-6;
    let mut idx: Vec<usize> = (0..s[0] + s[1]).collect();
    if !freeze_lambda {
        let off = s[0] + s[1] + s[2];
        idx.extend(off..off + s[3]);
    }
    let base = current.to_flat();
    let x0: Vec<f64> = idx.iter().map(|&k| base[k]).collect();
    let mut full = base.clone();
    let mut grad = vec![0.0; base.len()];
    let result = minimize(control, &x0, inverse_hessian, |x, g| {
        for (j, &k) in idx.iter().enumerate() {
            full[k] = x[j];
        }
        let c = Coefficients::from_flat(s, &full);
        match g {
            Some(g) => {
                let q = ev.q2(&c, w, Some(&mut grad));
                for (j, &k) in idx.iter().enumerate() {
                    g[j] = -grad[k];
                }
                -q
            }
            None => -ev.q2(&c, w, None),
        }
    });
    let mut flat = base;
    for (j, &k) in idx.iter().enumerate() {
        flat[k] = result.x[j];
    }
    let candidate = Coefficients::from_flat(s, &flat);
    let q_old = ev.q2(current, w, None);
    let q_new = ev.q2(&candidate, w, None);
    if q_new >= q_old {
        candidate
    } else {
        current.clone()
    }
}

fn boundary_flags(ev: &Evaluator, c: &Coefficients) -> BoundaryFlags {
    let mut flags = BoundaryFlags::default();
    let blocks = c.blocks();
    let tol = 1e-9;
    for i in 0..ev.n() {
        let (_, [pi, sigma, delta, eta]) = ev.row_params(i, blocks);
        let used = ev.sizes.map(|p| p > 0);
        flags.pi |= used[0] && (pi < tol || pi > 1.0 - tol);
        flags.sigma |= used[1] && (sigma < tol || sigma > 1.0 / tol);
        flags.delta |= used[2] && (delta < tol || delta > 1.0 - tol);
        flags.eta |= used[3] && (eta - 1.0 < tol || eta > 1.0 / tol);
    }
    flags
}

fn finish(
    data: &Dataset,
    spec: &ModelSpec,
    ev: &Evaluator,
    coefficients: Coefficients,
    log_likelihood: f64,
    posterior_weights: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
) -> Result<FitResult> {
    if !log_likelihood.is_finite() {
        return Err(Error::Evaluation(format!("log-likelihood at the estimate is {log_likelihood}")));
    }
    Ok(FitResult {
        family: spec.family,
        labels: coefficient_labels(data, spec)?,
        boundary: boundary_flags(ev, &coefficients),
        coefficients,
        log_likelihood,
        posterior_weights,
        iterations,
        converged,
        trace,
        n_obs: data.len(),
    })
}

fn fit_direct(
    data: &Dataset,
    spec: &ModelSpec,
    init: Option<&Coefficients>,
    control: &FitControl,
) -> Result<FitResult> {
    let ev = Evaluator::new(data, spec)?;
    let (y, m): (Vec<f64>, Vec<f64>) = data.rows().iter().map(|r| (r.y as f64, (r.m - r.y) as f64)).unzip();
    let pooled = y.iter().sum::<f64>() / (y.iter().sum::<f64>() + m.iter().sum::<f64>());
    let start = match init {
        Some(c) => c.beta.clone(),
        None => {
            let mut s = vec![0.0; ev.sizes[0]];
            s[0] = logit(pooled.clamp(DELTA_FLOOR, 1.0 - DELTA_FLOOR));
            s
        }
    };
    let (beta, steps) = weighted_logistic(&ev, 0, &y, &m, &start);

    if spec.family == Family::Binomial {
        let c = Coefficients { beta, alpha: vec![], gamma: vec![], lambda: vec![] };
        let l = ev.loglik(&c);
        return finish(data, spec, &ev, c, l, vec![], steps, true, vec![l]);
    }

    // BB: optimize from a moderate dispersion, and keep the binomial limit
    // (σ at the bottom of its range) as a fallback candidate.
    let interior = match init {
        Some(c) => c.clone(),
        None => {
            let mut c = Coefficients::zeros(ev.sizes);
            c.beta.copy_from_slice(&beta);
            c.alpha[0] = -2.0;
            c
        }
    };
    let mut limit = Coefficients::zeros(ev.sizes);
    limit.beta.copy_from_slice(&beta);
    limit.alpha[0] = SIGMA_MIN.ln() - 1.0;

    let mut grad = vec![0.0; ev.total_size()];
    let result = minimize(control, &interior.to_flat(), &mut Vec::new(), |x, g| {
        let c = Coefficients::from_flat(ev.sizes, x);
        match g {
            Some(g) => {
                let l = -ev.loglik_grad(&c, &mut grad);
                for (gi, v) in g.iter_mut().zip(&grad) {
                    *gi = -v;
                }
                l
            }
            None => -ev.loglik(&c),
        }
    });
    let optimum = Coefficients::from_flat(ev.sizes, &result.x);
    let l_opt = ev.loglik(&optimum);
    let l_limit = ev.loglik(&limit);
    let (c, l) = if l_opt >= l_limit || !l_limit.is_finite() { (optimum, l_opt) } else { (limit, l_limit) };
    finish(data, spec, &ev, c, l, vec![], result.iterations, result.converged, vec![l])
}

struct EmRun {
    coefficients: Coefficients,
    log_likelihood: f64,
    weights: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_em(ev: &Evaluator, init: Coefficients, control: &FitControl) -> Result<EmRun> {
    let (mut ll, mut w) = ev.posterior(&init);
    if !ll.is_finite() {
        return Err(Error::Evaluation(format!("log-likelihood at the EM start is {ll}")));
    }
    let mut c = init;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut inverse_hessian = Vec::new();
    while iterations < control.max_iterations {
        iterations += 1;
        let mut next = c.clone();
        next.gamma = gamma_step(ev, &w, &c.gamma);
        next = q2_step(ev, &w, &next, control, &mut inverse_hessian);
        let (ll_new, w_new) = ev.posterior(&next);
        if !ll_new.is_finite() {
            log::warn!("EM iteration {iterations}: log-likelihood became {ll_new}; stopping");
            break;
        }
        if ll_new < ll {
            // rounding-level decrease: no further progress is possible
            log::debug!("EM iteration {iterations}: log-likelihood fell by {:e}", ll - ll_new);
            converged = true;
            break;
        }
        let gain = ll_new - ll;
        c = next;
        ll = ll_new;
        w = w_new;
        trace.push(ll);
        if gain < control.epsilon {
            converged = true;
            break;
        }
    }
    Ok(EmRun { coefficients: c, log_likelihood: ll, weights: w, trace, iterations, converged })
}

fn fit_cbb(data: &Dataset, spec: &ModelSpec, init: Option<&Coefficients>, control: &FitControl) -> Result<FitResult> {
    let ev = Evaluator::new(data, spec)?;
    let bb = fit_direct(data, &spec.restricted_to(Family::BetaBinomial), None, control)?;
    let init = init.cloned().unwrap_or_else(|| cbb_start(&bb.coefficients, ev.sizes, DELTA_START));
    let mut best = run_em(&ev, init.clone(), control)?;

    if control.restarts > 0 {
        let normal = Normal::new(0.0, JITTER_SD).expect("valid sd");
        for r in 0..control.restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(control.seed.wrapping_add(r as u64));
            let flat: Vec<f64> = init.to_flat().iter().map(|v| v + normal.sample(&mut rng)).collect();
            match run_em(&ev, Coefficients::from_flat(ev.sizes, &flat), control) {
                Ok(run) if run.log_likelihood > best.log_likelihood => best = run,
                Ok(_) => {}
                Err(e) => log::warn!("restart {r} failed: {e}"),
            }
        }
    }

    // The cBB model nests BB at δ → 0; if EM ended below the BB optimum,
    // start again from that embedding.
    if best.log_likelihood < bb.log_likelihood {
        let embedded = cbb_start(&bb.coefficients, ev.sizes, DELTA_FLOOR);
        let run = run_em(&ev, embedded, control)?;
        if run.log_likelihood > best.log_likelihood {
            best = run;
        }
    }

    finish(
        data,
        spec,
        &ev,
        best.coefficients,
        best.log_likelihood,
        best.weights,
        best.iterations,
        best.converged,
        best.trace,
    )
}
