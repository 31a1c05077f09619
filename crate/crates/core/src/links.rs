//! Link functions for the four distribution parameters.
//!
//! logit for π and δ, log for σ, and log(η − 1) for η. Inverse links clamp
//! their output to the admissible numeric box used by the distributions.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Admissible bounds for probabilities (π and δ).
pub const PROB_MIN: f64 = 1e-12;
pub const PROB_MAX: f64 = 1.0 - 1e-12;
/// Admissible bounds for the dispersion σ.
pub const SIGMA_MIN: f64 = 1e-12;
pub const SIGMA_MAX: f64 = 1e12;
/// Admissible bounds for the degree of contamination η.
pub const ETA_MIN: f64 = 1.0 + 1e-12;
pub const ETA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// (0, 1) ↔ ℝ
    Logit,
    /// (0, ∞) ↔ ℝ
    Log,
    /// (1, ∞) ↔ ℝ via ln(x − 1)
    ShiftedLog,
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl LinkKind {
    /// Maps a linear predictor to the parameter scale, clamped to the
    /// admissible box.
    #[inline]
    pub fn inverse(self, t: f64) -> f64 {
        match self {
            LinkKind::Logit => logistic(t).clamp(PROB_MIN, PROB_MAX),
            LinkKind::Log => t.exp().clamp(SIGMA_MIN, SIGMA_MAX),
            LinkKind::ShiftedLog => (t.exp() + 1.0).clamp(ETA_MIN, ETA_MAX),
        }
    }

    /// Derivative of the (clamped) inverse link at `t`, expressed through
    /// the parameter value `v = inverse(t)`. Zero where the clamp is active.
    #[inline]
    pub(crate) fn inverse_derivative(self, t: f64, v: f64) -> f64 {
        match self {
            LinkKind::Logit => {
                let raw = logistic(t);
                if raw < PROB_MIN || raw > PROB_MAX {
                    0.0
                } else {
                    v * (1.0 - v)
                }
            }
            LinkKind::Log => {
                let raw = t.exp();
                if raw < SIGMA_MIN || raw > SIGMA_MAX {
                    0.0
                } else {
                    v
                }
            }
            LinkKind::ShiftedLog => {
                let raw = t.exp() + 1.0;
                if raw < ETA_MIN || raw > ETA_MAX {
                    0.0
                } else {
                    v - 1.0
                }
            }
        }
    }

    pub fn link(self, value: f64) -> Result<f64> {
        match self {
            LinkKind::Logit if value > 0.0 && value < 1.0 => Ok(logit(value)),
            LinkKind::Log if value > 0.0 && value.is_finite() => Ok(value.ln()),
            LinkKind::ShiftedLog if value > 1.0 && value.is_finite() => Ok((value - 1.0).ln()),
            _ => Err(domain(format!("{value} is outside the domain of the {self:?} link"))),
        }
    }
}

pub fn apply_inverse_link(kind: LinkKind, linear_predictor: f64) -> f64 {
    kind.inverse(linear_predictor)
}

pub fn apply_link(kind: LinkKind, parameter_value: f64) -> Result<f64> {
    kind.link(parameter_value)
}
