//! Binomial, beta-binomial (BB) and contaminated beta-binomial (cBB) laws.
//!
//! The beta-binomial uses the mean/dispersion parameterization: with
//! a = π/σ and b = (1 − π)/σ,
//!
//! ```text
//! f_BB(y; π, σ) = C(m, y) · B(y + a, m − y + b) / B(a, b)
//! ```
//!
//! which is evaluated as a ratio of rising factorials,
//! `Π_{k<y}(π + kσ) · Π_{k<m−y}(1 − π + kσ) / Π_{k<m}(1 + kσ)`, so that the
//! σ → 0 limit reduces to the binomial without cancellation. The cBB law
//! mixes a reference BB(π, σ) with weight 1 − δ and a contaminant
//! BB(π, ησ) with weight δ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::links::{ETA_MAX, ETA_MIN, PROB_MAX, PROB_MIN, SIGMA_MAX, SIGMA_MIN};
use crate::special::{ln_choose, scaled_rising, scaled_rising_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Binomial,
    BetaBinomial,
    ContaminatedBetaBinomial,
}

impl Family {
    pub fn short_name(self) -> &'static str {
        match self {
            Family::Binomial => "B",
            Family::BetaBinomial => "BB",
            Family::ContaminatedBetaBinomial => "cBB",
        }
    }
}

/// An observed count `y` out of at most `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundedCount {
    pub y: u64,
    pub m: u64,
}

impl BoundedCount {
    pub fn new(y: u64, m: u64) -> Result<Self> {
        if m == 0 {
            return Err(domain("number of trials m must be >= 1"));
        }
        if y > m {
            return Err(domain(format!("count y = {y} exceeds m = {m}")));
        }
        Ok(Self { y, m })
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if (PROB_MIN..=PROB_MAX).contains(&v) {
        Ok(())
    } else {
        Err(domain(format!("{name} = {v} must lie in (0, 1)")))
    }
}

fn check_sigma(v: f64) -> Result<()> {
    if (SIGMA_MIN..=SIGMA_MAX).contains(&v) {
        Ok(())
    } else {
        Err(domain(format!("sigma = {v} must be positive")))
    }
}

fn check_eta(v: f64) -> Result<()> {
    if (ETA_MIN..=ETA_MAX).contains(&v) {
        Ok(())
    } else {
        Err(domain(format!("eta = {v} must exceed 1")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbParams {
    pub pi: f64,
    pub sigma: f64,
}

impl BbParams {
    pub fn new(pi: f64, sigma: f64) -> Result<Self> {
        check_prob("pi", pi)?;
        check_sigma(sigma)?;
        Ok(Self { pi, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbbParams {
    pub pi: f64,
    pub sigma: f64,
    pub delta: f64,
    pub eta: f64,
}

impl CbbParams {
    pub fn new(pi: f64, sigma: f64, delta: f64, eta: f64) -> Result<Self> {
        check_prob("pi", pi)?;
        check_sigma(sigma)?;
        check_prob("delta", delta)?;
        check_eta(eta)?;
        if eta * sigma > SIGMA_MAX {
            return Err(domain(format!("contaminant dispersion eta*sigma = {} is too large", eta * sigma)));
        }
        Ok(Self { pi, sigma, delta, eta })
    }

    pub fn reference(&self) -> BbParams {
        BbParams { pi: self.pi, sigma: self.sigma }
    }

    pub fn contaminant(&self) -> BbParams {
        BbParams { pi: self.pi, sigma: self.eta * self.sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// ln of the binomial pmf.
pub fn binom_log_pmf(obs: BoundedCount, pi: f64) -> Result<f64> {
    check_prob("pi", pi)?;
    Ok(ln_choose(obs.m, obs.y) + binom_kernel(obs.y, obs.m, pi))
}

pub fn bb_log_pmf(obs: BoundedCount, p: &BbParams) -> f64 {
    ln_choose(obs.m, obs.y) + bb_kernel(obs.y, obs.m, p.pi, p.sigma)
}

pub fn cbb_log_pmf(obs: BoundedCount, p: &CbbParams) -> f64 {
    ln_choose(obs.m, obs.y) + cbb_kernel(obs.y, obs.m, p.pi, p.sigma, p.delta, p.eta)
}

// Kernels omit the ln C(m, y) term, which regression code precomputes per row.

#[inline]
pub(crate) fn binom_kernel(y: u64, m: u64, pi: f64) -> f64 {
    let mut v = 0.0;
    if y > 0 {
        v += y as f64 * pi.ln();
    }
    if m > y {
        v += (m - y) as f64 * (-pi).ln_1p();
    }
    v
}

#[inline]
pub(crate) fn bb_kernel(y: u64, m: u64, pi: f64, sigma: f64) -> f64 {
    scaled_rising_value(pi, sigma, y) + scaled_rising_value(1.0 - pi, sigma, m - y) - scaled_rising_value(1.0, sigma, m)
}

/// BB kernel with its partial derivatives in π and σ.
#[inline]
pub(crate) fn bb_kernel_grad(y: u64, m: u64, pi: f64, sigma: f64) -> (f64, f64, f64) {
    let a = scaled_rising(pi, sigma, y);
    let b = scaled_rising(1.0 - pi, sigma, m - y);
    let t = scaled_rising(1.0, sigma, m);
    (a.value + b.value - t.value, a.d_c - b.d_c, a.d_s + b.d_s - t.d_s)
}

#[inline]
pub(crate) fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[inline]
pub(crate) fn cbb_kernel(y: u64, m: u64, pi: f64, sigma: f64, delta: f64, eta: f64) -> f64 {
    let reference = (-delta).ln_1p() + bb_kernel(y, m, pi, sigma);
    let contaminant = delta.ln() + bb_kernel(y, m, pi, eta * sigma);
    log_sum_exp2(reference, contaminant)
}

fn check_trials(m: u64) -> Result<()> {
    if m == 0 {
        Err(domain("number of trials m must be >= 1"))
    } else {
        Ok(())
    }
}

pub fn binom_moments(m: u64, pi: f64) -> Result<MomentSet> {
    check_trials(m)?;
    check_prob("pi", pi)?;
    let m = m as f64;
    let pq = pi * (1.0 - pi);
    let variance = m * pq;
    Ok(MomentSet {
        mean: m * pi,
        variance,
        skewness: (1.0 - 2.0 * pi) / variance.sqrt(),
        excess_kurtosis: (1.0 - 6.0 * pq) / variance,
    })
}

pub fn bb_moments(m: u64, p: &BbParams) -> Result<MomentSet> {
    check_trials(m)?;
    let BbParams { pi, sigma: s } = *p;
    let m = m as f64;
    let pq = pi * (1.0 - pi);
    let variance = m * pq * (1.0 + (m - 1.0) * s / (1.0 + s));
    let skewness = (1.0 - 2.0 * pi) * (2.0 * m * s + 1.0) / ((2.0 * s + 1.0) * variance.sqrt());
    let excess_kurtosis = ((s + 1.0) * (s * (6.0 * m * (m * s + 1.0) - 1.0) + 1.0)
        - 6.0 * pq * (m * (6.0 * s + 5.0) * s * (m * s + 1.0) + s + 1.0))
        / (pq * m * (2.0 * s + 1.0) * (3.0 * s + 1.0) * (m * s + 1.0));
    Ok(MomentSet { mean: m * pi, variance, skewness, excess_kurtosis })
}

pub fn cbb_moments(m: u64, p: &CbbParams) -> Result<MomentSet> {
    check_trials(m)?;
    let CbbParams { pi, sigma: s, delta: d, eta: e } = *p;
    let m = m as f64;
    let pq = pi * (1.0 - pi);

    let variance = m * pq * ((1.0 - d) * (1.0 + m * s) * (1.0 + e * s) + d * (1.0 + m * e * s) * (1.0 + s))
        / ((1.0 + s) * (1.0 + e * s));

    // third central moment of BB(π, wσ)
    let third = |w: f64| {
        m * pq * (1.0 - 2.0 * pi) * (1.0 + m * s * w) * (1.0 + 2.0 * m * s * w) / ((1.0 + s * w) * (1.0 + 2.0 * s * w))
    };
    let skewness = ((1.0 - d) * third(1.0) + d * third(e)) / variance.powf(1.5);

    // fourth central moment of BB(π, wσ), divided by mπ(1 − π)
    let fourth = |w: f64| {
        let sw = s * w;
        (m * sw + 1.0)
            * (6.0 * (3.0 * (pi - 1.0) * pi + 1.0) * m * m * sw * sw
                + 3.0 * m * sw * (2.0 - (pi - 1.0) * pi * (m - 6.0))
                - 3.0 * (pi - 1.0) * pi * (m - 2.0)
                - sw
                + 1.0)
            / ((sw + 1.0) * (2.0 * sw + 1.0) * (3.0 * sw + 1.0))
    };
    let excess_kurtosis = -3.0 + m * pq / (variance * variance) * ((1.0 - d) * fourth(1.0) + d * fourth(e));

    Ok(MomentSet { mean: m * pi, variance, skewness, excess_kurtosis })
}

/// Moments by direct summation of a pmf over `{0, …, m}`.
pub fn brute_force_moments(m: u64, log_pmf: impl Fn(u64) -> f64) -> Result<MomentSet> {
    check_trials(m)?;
    let probs: Vec<f64> = (0..=m).map(|y| log_pmf(y).exp()).collect();
    let total: f64 = probs.iter().sum();
    if !((total - 1.0).abs() <= 1e-9) {
        return Err(domain(format!("pmf sums to {total}, not 1")));
    }
    let mean: f64 = probs.iter().enumerate().map(|(y, p)| y as f64 * p).sum();
    let central = |k: i32| -> f64 { probs.iter().enumerate().map(|(y, p)| (y as f64 - mean).powi(k) * p).sum() };
    let variance = central(2);
    Ok(MomentSet {
        mean,
        variance,
        skewness: central(3) / variance.powf(1.5),
        excess_kurtosis: central(4) / (variance * variance) - 3.0,
    })
}

/// ln of a Gamma(shape, 1) variate; stays finite for very small shapes.
fn ln_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive");
        g.sample(rng).ln()
    } else {
        // G(a) = G(a + 1) · U^{1/a}
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive");
        let u: f64 = rng.random::<f64>();
        g.sample(rng).ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// One draw from BB(π, σ): p* ~ Beta(π/σ, (1 − π)/σ), then y ~ Binomial(m, p*).
pub(crate) fn sample_bb<R: Rng + ?Sized>(rng: &mut R, m: u64, pi: f64, sigma: f64) -> u64 {
    let ln_a = ln_gamma_variate(rng, pi / sigma);
    let ln_b = ln_gamma_variate(rng, (1.0 - pi) / sigma);
    let p = 1.0 / (1.0 + (ln_b - ln_a).exp());
    Binomial::new(m, p).expect("probability in [0, 1]").sample(rng)
}

/// One draw via the hierarchical form: W ∈ {1, η} with P(W = η) = δ, then
/// Y | W ~ BB(π, Wσ).
pub(crate) fn sample_cbb<R: Rng + ?Sized>(rng: &mut R, m: u64, p: &CbbParams) -> u64 {
    let w = if rng.random::<f64>() < p.delta { p.eta } else { 1.0 };
    sample_bb(rng, m, p.pi, w * p.sigma)
}

pub fn cbb_sample(count: usize, m: u64, p: &CbbParams, seed: u64) -> Result<Vec<BoundedCount>> {
    check_trials(m)?;
    if count == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| BoundedCount { y: sample_cbb(&mut rng, m, p), m }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obs(y: u64, m: u64) -> BoundedCount {
        BoundedCount::new(y, m).unwrap()
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(BoundedCount::new(3, 2).is_err());
        assert!(BoundedCount::new(0, 0).is_err());
        assert!(BbParams::new(0.0, 1.0).is_err());
        assert!(BbParams::new(0.5, 0.0).is_err());
        assert!(CbbParams::new(0.5, 1.0, 1.0, 2.0).is_err());
        assert!(CbbParams::new(0.5, 1.0, 0.5, 1.0).is_err());
        assert!(binom_log_pmf(obs(1, 2), 1.0).is_err());
        assert!(binom_moments(0, 0.5).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_abs_diff_eq!(binom_log_pmf(obs(0, 2), 0.5).unwrap(), 0.25f64.ln(), epsilon = 1e-15);
        for m in [1u64, 7, 40] {
            for pi in [0.1, 0.5, 0.93] {
                assert_abs_diff_eq!(binom_log_pmf(obs(m, m), pi).unwrap(), m as f64 * pi.ln(), epsilon = 1e-12);
            }
        }
        // C(10,3)·0.2³·0.8⁷ = 120 · 8/1000 · 2097152/10000000
        let exact = 120.0 * 0.008 * 0.209_715_2;
        assert_abs_diff_eq!(binom_log_pmf(obs(3, 10), 0.2).unwrap(), f64::ln(exact), epsilon = 1e-13);
    }

    #[test]
    fn bb_symmetric_at_half() {
        let p = BbParams::new(0.5, 0.1).unwrap();
        for k in 0..=5 {
            assert_abs_diff_eq!(bb_log_pmf(obs(5 - k, 10), &p), bb_log_pmf(obs(5 + k, 10), &p), epsilon = 1e-13);
        }
    }

    #[test]
    fn bb_tends_to_binomial() {
        let p = BbParams::new(0.3, 1e-9).unwrap();
        for y in 0..=10 {
            let bb = bb_log_pmf(obs(y, 10), &p);
            let b = binom_log_pmf(obs(y, 10), 0.3).unwrap();
            assert!((bb - b).abs() < 1e-6, "y = {y}");
        }
    }

    #[test]
    fn cbb_limits() {
        let near_delta0 = CbbParams::new(0.5, 0.1, 1e-12, 10.0).unwrap();
        let near_eta1 = CbbParams::new(0.5, 0.1, 0.25, 1.0 + 1e-12).unwrap();
        let bb = BbParams::new(0.5, 0.1).unwrap();
        for y in 0..=10 {
            let r = bb_log_pmf(obs(y, 10), &bb);
            assert!((cbb_log_pmf(obs(y, 10), &near_delta0) - r).abs() < 1e-9);
            assert!((cbb_log_pmf(obs(y, 10), &near_eta1) - r).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        for &(y, m, pi, s) in &[(3u64, 10u64, 0.3, 0.2), (0, 5, 0.8, 2.0), (70, 100, 0.6, 0.05)] {
            let (_, dpi, ds) = bb_kernel_grad(y, m, pi, s);
            let h = 1e-6;
            let fd_pi = (bb_kernel(y, m, pi + h, s) - bb_kernel(y, m, pi - h, s)) / (2.0 * h);
            let fd_s = (bb_kernel(y, m, pi, s + h) - bb_kernel(y, m, pi, s - h)) / (2.0 * h);
            assert!((dpi - fd_pi).abs() < 1e-5 * dpi.abs().max(1.0));
            assert!((ds - fd_s).abs() < 1e-5 * ds.abs().max(1.0));
        }
    }

    #[test]
    fn binomial_moment_examples() {
        let a = binom_moments(10, 0.5).unwrap();
        assert_abs_diff_eq!(a.skewness, 0.0);
        assert_abs_diff_eq!(a.excess_kurtosis, -0.2, epsilon = 1e-15);
        let b = binom_moments(4, 0.25).unwrap();
        assert_abs_diff_eq!(b.mean, 1.0);
        assert_abs_diff_eq!(b.variance, 0.75);
        let bf = brute_force_moments(2, |y| binom_log_pmf(obs(y, 2), 0.5).unwrap()).unwrap();
        assert_abs_diff_eq!(bf.mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(bf.variance, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bb_moment_limits() {
        let m = bb_moments(10, &BbParams::new(0.3, 1e-10).unwrap()).unwrap();
        assert_abs_diff_eq!(m.variance, 2.1, epsilon = 1e-8);
        for s in [0.01, 1.0, 10.0] {
            assert_eq!(bb_moments(7, &BbParams::new(0.5, s).unwrap()).unwrap().skewness, 0.0);
        }
    }

    #[test]
    fn cbb_mean_ignores_contamination() {
        for (s, d, e) in [(0.1, 0.25, 10.0), (3.0, 0.9, 1.5), (0.01, 0.01, 500.0)] {
            let mo = cbb_moments(12, &CbbParams::new(0.35, s, d, e).unwrap()).unwrap();
            assert_eq!(mo.mean, 12.0 * 0.35);
        }
    }

    #[test]
    fn cbb_moments_tend_to_bb() {
        let bb = bb_moments(10, &BbParams::new(0.2, 0.1).unwrap()).unwrap();
        let c = cbb_moments(10, &CbbParams::new(0.2, 0.1, 1e-12, 5.0).unwrap()).unwrap();
        assert_abs_diff_eq!(c.variance, bb.variance, epsilon = 1e-8);
        assert_abs_diff_eq!(c.skewness, bb.skewness, epsilon = 1e-8);
        assert_abs_diff_eq!(c.excess_kurtosis, bb.excess_kurtosis, epsilon = 1e-8);
    }

    #[test]
    fn brute_force_rejects_unnormalized() {
        assert!(brute_force_moments(3, |_| 0.0).is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = CbbParams::new(0.4, 0.3, 0.2, 8.0).unwrap();
        let a = cbb_sample(500, 10, &p, 99).unwrap();
        let b = cbb_sample(500, 10, &p, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.y <= 10 && o.m == 10));
        assert_ne!(a, cbb_sample(500, 10, &p, 100).unwrap());
    }

    #[test]
    fn sampler_handles_huge_dispersion() {
        // shapes near 1e-9: every draw should land on 0 or m
        let p = CbbParams::new(0.3, 1e8, 0.5, 10.0).unwrap();
        let draws = cbb_sample(2000, 10, &p, 1).unwrap();
        assert!(draws.iter().all(|o| o.y == 0 || o.y == 10));
        let share = draws.iter().filter(|o| o.y == 10).count() as f64 / 2000.0;
        assert!((share - 0.3).abs() < 0.05);
    }
}
