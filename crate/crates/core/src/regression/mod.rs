//! Regression models for bounded counts: B-RM, BB-RM and cBB-RM.
//!
//! Each distribution parameter has its own linear predictor and link:
//! π (logit, coefficients β), σ (log, α), δ (logit, γ) and η (log(η − 1), λ).
//! B-RM uses only β, BB-RM uses β and α. cBB-RM is fitted by EM.

mod dataset;
mod fit;
mod likelihood;

pub use dataset::{Dataset, Factor, Row};
pub use fit::{e_step, fit, initialize, m_step_gamma, m_step_q2, BoundaryFlags, FitControl, FitResult, InnerOptimizer};
pub use likelihood::{linear_predictors, observed_log_likelihood, RowParams};

pub(crate) use likelihood::Evaluator;

use serde::{Deserialize, Serialize};

use crate::distributions::Family;
use crate::error::{Error, Result};

/// Which covariates enter each linear predictor. Every predictor has an
/// intercept; the term lists name additional covariates (or factors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub pi_terms: Vec<String>,
    pub sigma_terms: Vec<String>,
    pub delta_terms: Vec<String>,
    pub eta_terms: Vec<String>,
}

fn owned(terms: &[&str]) -> Vec<String> {
    terms.iter().map(|s| s.to_string()).collect()
}

impl ModelSpec {
    /// Intercept-only predictors for every parameter the family uses.
    pub fn new(family: Family) -> Self {
        Self { family, pi_terms: Vec::new(), sigma_terms: Vec::new(), delta_terms: Vec::new(), eta_terms: Vec::new() }
    }

    pub fn with_pi(mut self, terms: &[&str]) -> Self {
        self.pi_terms = owned(terms);
        self
    }

    pub fn with_sigma(mut self, terms: &[&str]) -> Self {
        self.sigma_terms = owned(terms);
        self
    }

    pub fn with_delta(mut self, terms: &[&str]) -> Self {
        self.delta_terms = owned(terms);
        self
    }

    pub fn with_eta(mut self, terms: &[&str]) -> Self {
        self.eta_terms = owned(terms);
        self
    }

    pub(crate) fn terms(&self) -> [&[String]; 4] {
        [&self.pi_terms, &self.sigma_terms, &self.delta_terms, &self.eta_terms]
    }

    /// Which of (π, σ, δ, η) the family models.
    pub(crate) fn used_blocks(&self) -> [bool; 4] {
        match self.family {
            Family::Binomial => [true, false, false, false],
            Family::BetaBinomial => [true, true, false, false],
            Family::ContaminatedBetaBinomial => [true; 4],
        }
    }

    /// The same π (and σ) predictors under a smaller family.
    pub fn restricted_to(&self, family: Family) -> Self {
        let mut spec = Self::new(family);
        let used = spec.used_blocks();
        spec.pi_terms = self.pi_terms.clone();
        if used[1] {
            spec.sigma_terms = self.sigma_terms.clone();
        }
        if used[2] {
            spec.delta_terms = self.delta_terms.clone();
            spec.eta_terms = self.eta_terms.clone();
        }
        spec
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let names = ["sigma", "delta", "eta"];
        let used = self.used_blocks();
        for (b, terms) in self.terms().iter().enumerate().skip(1) {
            if !used[b] && !terms.is_empty() {
                return Err(Error::Schema(format!(
                    "{} terms given but the {} family has no {} parameter",
                    names[b - 1],
                    self.family.short_name(),
                    names[b - 1]
                )));
            }
        }
        Ok(())
    }
}

/// Regression coefficients, intercept first in each block. Blocks the family
/// does not use are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Coefficients {
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.beta, &self.alpha, &self.gamma, &self.lambda]
    }

    pub fn sizes(&self) -> [usize; 4] {
        [self.beta.len(), self.alpha.len(), self.gamma.len(), self.lambda.len()]
    }

    /// β, α, γ, λ concatenated.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn from_flat(sizes: [usize; 4], flat: &[f64]) -> Self {
        assert_eq!(flat.len(), sizes.iter().sum::<usize>());
        let mut it = flat.iter().copied();
        let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<_>>();
        Self { beta: take(sizes[0]), alpha: take(sizes[1]), gamma: take(sizes[2]), lambda: take(sizes[3]) }
    }

    pub fn zeros(sizes: [usize; 4]) -> Self {
        Self::from_flat(sizes, &vec![0.0; sizes.iter().sum()])
    }

    pub fn len(&self) -> usize {
        self.sizes().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Coefficient labels in flat order, e.g. `beta[(Intercept)]`, `beta[x]`.
pub fn coefficient_labels(data: &Dataset, spec: &ModelSpec) -> Result<Vec<String>> {
    spec.validate()?;
    let used = spec.used_blocks();
    let mut labels = Vec::new();
    for (b, prefix) in ["beta", "alpha", "gamma", "lambda"].iter().enumerate() {
        if !used[b] {
            continue;
        }
        labels.push(format!("{prefix}[(Intercept)]"));
        for term in spec.terms()[b] {
            for j in data.resolve_term(term)? {
                labels.push(format!("{prefix}[{}]", data.columns()[j]));
            }
        }
    }
    Ok(labels)
}
