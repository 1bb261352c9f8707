//! Pseudo-outcome meta-learners for heterogeneous treatment effects in
//! right-censored survival data.
//!
//! The library estimates the conditional average treatment effect on the
//! survival-probability scale, `tau(x; t*) = S1(t*|x) - S0(t*|x)`, by a
//! two-step procedure: nuisance estimation (conditional survival, propensity,
//! censoring distribution) followed by a weighted pseudo-outcome regression.
//! Six learners are provided (X, M, DR, D, DEA, R), each defined by a
//! `(Y*, w^M)` construction on the complete-case subset, combined with
//! inverse-probability-of-censoring weights `w^C`.
//!
//! On top of the estimators the crate ships KernelSHAP variable attribution
//! for fitted CATE models, mean-treatment-difference (MTD) subgroup
//! discovery over CATE percentiles, and a seeded simulation benchmark with
//! Weibull data-generating processes and a full evaluation battery.

pub mod data;
pub mod error;
pub mod forest;
pub mod interpret;
pub mod io;
pub mod linalg;
pub mod metalearners;
pub mod nuisance;
pub mod rng;
pub mod simbench;
pub mod subgroup;

pub use data::{Cohort, CompleteCaseView, CovariateKind, CovariateSchema, SurvivalRecord, TargetTime};
pub use error::SurvError;
pub use metalearners::{CateModel, LearnerKind, PseudoOutcomeSet};
pub use nuisance::{NuisanceBundle, NuisanceConfig, NuisanceFit};

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, SurvError>;
