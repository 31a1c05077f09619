//! Data generators shared by the integration suites.
#![allow(dead_code)]

use cbbreg::regression::{Dataset, Row};
use cbbreg::simulation::{contaminate, generate_binomial_data, simulate_responses};
use cbbreg::{Coefficients, Family, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One covariate x ~ U(−1, 1); m drawn from 5..=15 when `vary_m`, else 10.
pub fn design(n: usize, vary_m: bool, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| Row {
            y: 0,
            m: if vary_m { rng.random_range(5..=15) } else { 10 },
            covariates: vec![rng.random_range(-1.0..1.0)],
        })
        .collect();
    Dataset::new(vec!["x".into()], rows).unwrap()
}

pub fn coefficients(beta: [f64; 2], alpha: f64, gamma: f64, lambda: f64) -> Coefficients {
    Coefficients { beta: beta.to_vec(), alpha: vec![alpha], gamma: vec![gamma], lambda: vec![lambda] }
}

/// Responses from cBB-RM with π on x and the other parameters
/// intercept-only.
pub fn cbb_data(n: usize, beta: [f64; 2], sigma: f64, delta: f64, eta: f64, vary_m: bool, seed: u64) -> Dataset {
    let spec = ModelSpec::new(Family::ContaminatedBetaBinomial).with_pi(&["x"]);
    let c = coefficients(beta, sigma.ln(), (delta / (1.0 - delta)).ln(), (eta - 1.0).ln());
    simulate_responses(&design(n, vary_m, seed), &spec, &c, seed ^ 0x9e37).unwrap()
}

pub fn bb_data(n: usize, beta: [f64; 2], sigma: f64, vary_m: bool, seed: u64) -> Dataset {
    let spec = ModelSpec::new(Family::BetaBinomial).with_pi(&["x"]);
    let c = Coefficients { beta: beta.to_vec(), alpha: vec![sigma.ln()], gamma: vec![], lambda: vec![] };
    simulate_responses(&design(n, vary_m, seed), &spec, &c, seed ^ 0x9e37).unwrap()
}

/// Generator `kind` (0..4): binomial, BB, cBB, contaminated binomial.
pub fn mixed(kind: usize, n: usize, seed: u64) -> Dataset {
    match kind % 4 {
        0 => generate_binomial_data(n, 10, [0.5, 1.0], seed).unwrap(),
        1 => bb_data(n, [-0.5, 1.0], 0.2, seed % 2 == 0, seed),
        2 => cbb_data(n, [0.3, -0.8], 0.05, 0.2, 15.0, seed % 2 == 0, seed),
        _ => contaminate(&generate_binomial_data(n, 10, [2.0, 1.0], seed).unwrap(), 0.05, seed + 1).unwrap(),
    }
}

pub fn pi_x(family: Family) -> ModelSpec {
    ModelSpec::new(family).with_pi(&["x"])
}
