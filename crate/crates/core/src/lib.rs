//! Contaminated beta-binomial distribution and regression.
//!
//! The cBB law mixes two beta-binomials that share a mean parameter π: a
//! reference BB(π, σ) and, with weight δ, a contaminant BB(π, ησ) with
//! inflated dispersion. The crate provides the distributions, regression
//! models for all four parameters fitted by EM, Hessian-based inference,
//! a contamination simulation study, and CSV/JSON I/O.

pub mod distributions;
pub mod error;
pub mod formula;
pub mod inference;
pub mod io;
pub mod links;
pub mod optim;
pub mod regression;
pub mod simulation;
pub mod special;

pub use distributions::{BbParams, BoundedCount, CbbParams, Family, MomentSet};
pub use error::{Error, Result};
pub use regression::{Coefficients, Dataset, FitControl, FitResult, ModelSpec};
