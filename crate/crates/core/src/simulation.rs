//! Data generation and the contamination sensitivity study.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_bb, sample_cbb, CbbParams, Family};
use crate::error::{domain, Error, Result};
use crate::links::logistic;
use crate::regression::{fit, linear_predictors, Coefficients, Dataset, FitControl, ModelSpec, Row};

/// Share of failed fits per (family, fraction) above which a study aborts.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub m: u64,
    pub true_beta: [f64; 2],
    pub contamination_fractions: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n: 500,
            m: 10,
            true_beta: [2.0, 1.0],
            contamination_fractions: vec![0.01, 0.05],
            replications: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub family: Family,
    pub fraction: f64,
    /// 0 for the intercept, 1 for the slope.
    pub coefficient: usize,
    pub bias: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCounts {
    pub family: Family,
    pub fraction: f64,
    pub succeeded: usize,
    pub failed: usize,
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub cells: Vec<StudyCell>,
    pub counts: Vec<FitCounts>,
}

impl StudyReport {
    pub fn cell(&self, family: Family, fraction: f64, coefficient: usize) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.family == family && c.fraction == fraction && c.coefficient == coefficient)
    }
}

pub const STUDY_FAMILIES: [Family; 3] = [Family::Binomial, Family::BetaBinomial, Family::ContaminatedBetaBinomial];

fn check_config(n: usize, m: u64) -> Result<()> {
    if n == 0 {
        return Err(domain("n must be >= 1"));
    }
    if m == 0 {
        return Err(domain("m must be >= 1"));
    }
    Ok(())
}

pub(crate) fn binomial_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, m: u64, beta: [f64; 2]) -> Result<Dataset> {
    let rows = (0..n)
        .map(|_| {
            let x: f64 = rng.random();
            let p = logistic(beta[0] + beta[1] * x);
            let y = Binomial::new(m, p).map_err(|e| domain(e.to_string()))?.sample(rng);
            Ok(Row { y, m, covariates: vec![x] })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(vec!["x".into()], rows)
}

/// x ~ U(0, 1) and y ~ Binomial(m, logistic(β₀ + β₁x)).
pub fn generate_binomial_data(n: usize, m: u64, beta: [f64; 2], seed: u64) -> Result<Dataset> {
    check_config(n, m)?;
    binomial_rows(&mut ChaCha8Rng::seed_from_u64(seed), n, m, beta)
}

pub(crate) fn contaminate_with<R: Rng + ?Sized>(rng: &mut R, data: &Dataset, fraction: f64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(domain(format!("contamination fraction {fraction} not in [0, 1)")));
    }
    let n = data.len();
    let k = (fraction * n as f64).ceil() as usize;
    let mut picked = sample(rng, n, k).into_vec();
    picked.sort_unstable();
    let replacements = picked.into_iter().map(|i| (i, rng.random_range(0..=data.rows()[i].m))).collect();
    let mut out = data.clone();
    out.replace_responses(replacements);
    Ok(out)
}

/// Replaces the responses of ⌈fraction·n⌉ rows, chosen without replacement,
/// with draws from the discrete uniform law on {0, …, m}.
pub fn contaminate(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    contaminate_with(&mut ChaCha8Rng::seed_from_u64(seed), data, fraction)
}

/// Redraws every response from the model implied by `spec` and `coeffs`,
/// keeping covariates and m.
pub fn simulate_responses(data: &Dataset, spec: &ModelSpec, coeffs: &Coefficients, seed: u64) -> Result<Dataset> {
    let params = linear_predictors(data, spec, coeffs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = data
        .rows()
        .iter()
        .zip(&params)
        .map(|(row, p)| {
            let y = match spec.family {
                Family::Binomial => Binomial::new(row.m, p.pi).map_err(|e| domain(e.to_string()))?.sample(&mut rng),
                Family::BetaBinomial => sample_bb(&mut rng, row.m, p.pi, p.sigma),
                Family::ContaminatedBetaBinomial => {
                    sample_cbb(&mut rng, row.m, &CbbParams::new(p.pi, p.sigma, p.delta, p.eta)?)
                }
            };
            Ok(Row { y, m: row.m, covariates: row.covariates.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Dataset::new(data.columns().to_vec(), rows)?;
    for f in data.factors() {
        out = out.with_factor(f.clone())?;
    }
    Ok(out)
}

type Outcome = std::result::Result<(Vec<f64>, bool), String>;

fn replication(config: &StudyConfig, control: &FitControl, fraction_index: usize, r: usize) -> Result<Vec<Outcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
    let clean = binomial_rows(&mut rng, config.n, config.m, config.true_beta)?;
    // Same clean data for every fraction; contamination uses its own stream.
    rng.set_stream(1 + fraction_index as u64);
    let data = contaminate_with(&mut rng, &clean, config.contamination_fractions[fraction_index])?;
    Ok(STUDY_FAMILIES
        .iter()
        .map(|&family| {
            let spec = ModelSpec::new(family).with_pi(&["x"]);
            fit(&data, &spec, None, control)
                .map(|f| (f.coefficients.beta.clone(), f.converged))
                .map_err(|e| e.to_string())
        })
        .collect())
}

/// Generates, contaminates and fits B-RM, BB-RM and cBB-RM (π on x, other
/// parameters intercept-only) for every replication and fraction, then
/// reports bias and MSE of β̂₀ and β̂₁. Replication r uses seed + r.
pub fn run_sensitivity_study(config: &StudyConfig, control: &FitControl) -> Result<StudyReport> {
    check_config(config.n, config.m)?;
    if config.replications == 0 {
        return Err(domain("replications must be >= 1"));
    }
    if config.contamination_fractions.is_empty() {
        return Err(domain("at least one contamination fraction is required"));
    }
    for &f in &config.contamination_fractions {
        if !(0.0..1.0).contains(&f) {
            return Err(domain(format!("contamination fraction {f} not in [0, 1)")));
        }
    }
    let jobs: Vec<(usize, usize)> =
        (0..config.contamination_fractions.len()).flat_map(|f| (0..config.replications).map(move |r| (f, r))).collect();
    let outcomes: Vec<Vec<Outcome>> =
        jobs.par_iter().map(|&(f, r)| replication(config, control, f, r)).collect::<Result<_>>()?;

    let mut cells = Vec::new();
    let mut counts = Vec::new();
    for (fi, &fraction) in config.contamination_fractions.iter().enumerate() {
        let block = &outcomes[fi * config.replications..(fi + 1) * config.replications];
        for (k, &family) in STUDY_FAMILIES.iter().enumerate() {
            let mut estimates = Vec::new();
            let mut failed = 0;
            let mut not_converged = 0;
            for (r, rep) in block.iter().enumerate() {
                match &rep[k] {
                    Ok((beta, converged)) => {
                        not_converged += usize::from(!converged);
                        estimates.push(beta.clone());
                    }
                    Err(e) => {
                        log::warn!("{} fit failed in replication {r} at fraction {fraction}: {e}", family.short_name());
                        failed += 1;
                    }
                }
            }
            if failed as f64 > MAX_FAILURE_RATE * config.replications as f64 {
                return Err(Error::TooManyFailures { failed, total: config.replications });
            }
            counts.push(FitCounts { family, fraction, succeeded: estimates.len(), failed, not_converged });
            for coefficient in 0..2 {
                let truth = config.true_beta[coefficient];
                let count = estimates.len() as f64;
                let bias = estimates.iter().map(|b| b[coefficient] - truth).sum::<f64>() / count;
                let mse = estimates.iter().map(|b| (b[coefficient] - truth).powi(2)).sum::<f64>() / count;
                cells.push(StudyCell { family, fraction, coefficient, bias, mse });
            }
        }
    }
    Ok(StudyReport { config: config.clone(), cells, counts })
}
