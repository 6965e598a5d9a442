//! Estimation and asymptotically exact inference for average treatment
//! effects under covariate-adaptive randomization with multiple treatments.
//!
//! The crate covers the full workflow around stratified experiments:
//!
//! - [`types`]: datasets of (outcome, arm, stratum) records, cell counts,
//!   target assignment proportions, linear hypotheses;
//! - [`randomize`]: simple random sampling and stratified block
//!   randomization of treatment labels;
//! - [`estimators`]: ATE estimation from the saturated regression (all
//!   treatment-by-stratum interactions) and from the strata-fixed-effects
//!   regression;
//! - [`variance`]: homoskedasticity-only and HC0 sandwich variances for
//!   both regressions, the between-strata heterogeneity correction V̂_H
//!   that makes them consistent under covariate-adaptive assignment, and
//!   analytic asymptotic variances assembled from population moments;
//! - [`hypothesis`]: Wald tests of Ψθ = c, χ² tail utilities, coefficient
//!   reports, and the two-sample t-test baseline;
//! - [`power`]: limiting local power of Wald tests (noncentral χ² closed
//!   form and a Monte Carlo branch for mis-studentized tests);
//! - [`dgp`] / [`moments`]: the simulation study's outcome models and
//!   their Monte Carlo population moments;
//! - [`montecarlo`]: the rejection-rate simulation harness with shipped
//!   reference tables.
//!
//! All randomness flows through [`rng::RngSeed`] addresses, so every
//! result in the crate is reproducible bit-for-bit across platforms and
//! thread counts.

pub mod dgp;
pub mod error;
pub mod estimators;
pub mod hypothesis;
pub mod linalg;
pub mod moments;
pub mod montecarlo;
pub mod power;
pub mod randomize;
pub mod rng;
pub mod special;
pub mod types;
pub mod variance;

pub use error::{Error, Result};
