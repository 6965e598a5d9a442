//! ATE estimators from the two regressions of interest.
//!
//! The saturated regression (outcome on stratum indicators plus all
//! treatment-by-stratum interactions) is block-orthogonal, so its OLS
//! coefficients are within-cell means and are computed here in one O(n)
//! pass. The strata-fixed-effects regression (outcome on stratum indicators
//! plus treatment indicators) is solved through the Frisch–Waugh–Lovell
//! partialled |A|×|A| system, again from cell aggregates only. The generic
//! dense-OLS routes exist solely as oracles in the test suite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{count_cells, validate_dataset, Dataset, StratumCounts, Violation};

/// Which regression produced an ATE vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AteKind {
    Saturated,
    FixedEffects,
}

/// Estimated ATE vector θ̂ = (θ̂_a : a ∈ A) relative to control.
#[derive(Debug, Clone)]
pub struct AteEstimate {
    pub theta: Vec<f64>,
    pub kind: AteKind,
    pub n: usize,
}

/// Saturated-regression fit: per-stratum control means δ̂(s), interaction
/// contrasts β̂_a(s), and residuals.
#[derive(Debug, Clone)]
pub struct SaturatedFit {
    /// Control-cell mean per stratum, indexed `[s-1]`.
    pub delta: Vec<f64>,
    /// β̂_a(s) = cell mean (a,s) − cell mean (0,s), indexed `[a-1][s-1]`.
    pub beta: Vec<Vec<f64>>,
    pub counts: StratumCounts,
    /// Least-squares residuals in dataset order.
    pub residuals: Vec<f64>,
    /// Σ û² within each (a, s) cell, indexed `[a][s-1]` over all arms.
    cell_sq_resid: Vec<Vec<f64>>,
    /// (1/n) Σ û².
    mean_sq_resid: f64,
}

impl SaturatedFit {
    pub fn num_treatments(&self) -> usize {
        self.beta.len()
    }

    pub fn num_strata(&self) -> usize {
        self.delta.len()
    }

    pub fn n(&self) -> usize {
        self.counts.n
    }

    /// β̂_a(s) with arm `a ≥ 1` and 1-based stratum `s`.
    pub fn beta_at(&self, a: usize, s: usize) -> f64 {
        self.beta[a - 1][s - 1]
    }

    /// Fitted cell mean for arm `a` (0 = control) in stratum `s`.
    pub fn cell_mean(&self, a: usize, s: usize) -> f64 {
        if a == 0 {
            self.delta[s - 1]
        } else {
            self.delta[s - 1] + self.beta[a - 1][s - 1]
        }
    }

    /// Σ û² over cell (a, s).
    pub fn cell_sq_residual_sum(&self, a: usize, s: usize) -> f64 {
        self.cell_sq_resid[a][s - 1]
    }

    /// (1/n) Σ û².
    pub fn mean_squared_residual(&self) -> f64 {
        self.mean_sq_resid
    }
}

fn first_error(violations: &[Violation]) -> Error {
    for v in violations {
        if let Violation::EmptyCell { treatment, stratum } = v {
            return Error::EmptyCell {
                treatment: *treatment,
                stratum: *stratum,
            };
        }
    }
    Error::InvalidDataset(
        violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; "),
    )
}

/// Fit the saturated regression by cell means.
pub fn fit_saturated(dataset: &Dataset) -> Result<SaturatedFit> {
    let violations = validate_dataset(dataset);
    if !violations.is_empty() {
        return Err(first_error(&violations));
    }
    let counts = count_cells(dataset);
    let num_arms = dataset.num_treatments() + 1;
    let num_strata = dataset.num_strata();

    let mut sums = vec![vec![0.0f64; num_strata]; num_arms];
    for obs in dataset.observations() {
        sums[obs.a.0][obs.s.0 - 1] += obs.y;
    }
    let mut means = vec![vec![0.0f64; num_strata]; num_arms];
    for a in 0..num_arms {
        for s0 in 0..num_strata {
            means[a][s0] = sums[a][s0] / counts.n_as[a][s0] as f64;
        }
    }

    let delta = means[0].clone();
    let beta: Vec<Vec<f64>> = (1..num_arms)
        .map(|a| (0..num_strata).map(|s0| means[a][s0] - means[0][s0]).collect())
        .collect();

    let mut residuals = Vec::with_capacity(dataset.len());
    let mut cell_sq_resid = vec![vec![0.0f64; num_strata]; num_arms];
    let mut total_sq = 0.0;
    for obs in dataset.observations() {
        let u = obs.y - means[obs.a.0][obs.s.0 - 1];
        residuals.push(u);
        cell_sq_resid[obs.a.0][obs.s.0 - 1] += u * u;
        total_sq += u * u;
    }

    Ok(SaturatedFit {
        delta,
        beta,
        counts,
        residuals,
        cell_sq_resid,
        mean_sq_resid: total_sq / dataset.len() as f64,
    })
}

/// θ̂_a = Σ_s (n(s)/n) β̂_a(s).
pub fn ate_saturated(fit: &SaturatedFit) -> AteEstimate {
    let n = fit.counts.n as f64;
    let theta = fit
        .beta
        .iter()
        .map(|row| {
            row.iter()
                .zip(fit.counts.n_s.iter())
                .map(|(&b, &ns)| (ns as f64 / n) * b)
                .sum()
        })
        .collect();
    AteEstimate {
        theta,
        kind: AteKind::Saturated,
        n: fit.counts.n,
    }
}

/// Strata-fixed-effects fit: common treatment coefficients β̂*_a and
/// stratum intercepts δ̂*_s.
#[derive(Debug, Clone)]
pub struct SfeFit {
    /// Stratum intercepts, indexed `[s-1]`.
    pub delta_star: Vec<f64>,
    /// Treatment coefficients, indexed `[a-1]`.
    pub beta_star: Vec<f64>,
    pub counts: StratumCounts,
    pub residuals: Vec<f64>,
    cell_sq_resid: Vec<Vec<f64>>,
    mean_sq_resid: f64,
    /// The partialled Gram matrix A'MA, kept for variance estimation.
    partialled_gram: DMatrix<f64>,
}

impl SfeFit {
    pub fn num_treatments(&self) -> usize {
        self.beta_star.len()
    }

    pub fn num_strata(&self) -> usize {
        self.delta_star.len()
    }

    pub fn n(&self) -> usize {
        self.counts.n
    }

    pub fn cell_sq_residual_sum(&self, a: usize, s: usize) -> f64 {
        self.cell_sq_resid[a][s - 1]
    }

    pub fn mean_squared_residual(&self) -> f64 {
        self.mean_sq_resid
    }

    pub(crate) fn partialled_gram(&self) -> &DMatrix<f64> {
        &self.partialled_gram
    }

    /// Whether the observed assignment shares n_a(s)/n(s) are the same
    /// across strata within `tol`. When they are not, β̂* does not target
    /// the ATE and callers should surface that.
    pub fn proportions_approximately_constant(&self, tol: f64) -> bool {
        let n = self.counts.n as f64;
        for a in 0..self.counts.n_as.len() {
            let pooled = self.counts.n_a(a) as f64 / n;
            for s0 in 0..self.counts.num_strata() {
                let share = self.counts.n_as[a][s0] as f64 / self.counts.n_s[s0] as f64;
                if (share - pooled).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Fit the strata-fixed-effects regression through the FWL partialled
/// system: β̂* solves (A'MA) β = A'MY where M projects out stratum
/// indicators, all assembled from cell counts and cell sums.
pub fn fit_sfe(dataset: &Dataset) -> Result<SfeFit> {
    let violations = validate_dataset(dataset);
    if !violations.is_empty() {
        return Err(first_error(&violations));
    }
    let counts = count_cells(dataset);
    let num_arms = dataset.num_treatments() + 1;
    let num_treat = dataset.num_treatments();
    let num_strata = dataset.num_strata();

    let mut cell_sums = vec![vec![0.0f64; num_strata]; num_arms];
    let mut stratum_sums = vec![0.0f64; num_strata];
    for obs in dataset.observations() {
        cell_sums[obs.a.0][obs.s.0 - 1] += obs.y;
        stratum_sums[obs.s.0 - 1] += obs.y;
    }

    // (A'MA)[a,b] = 1{a=b} n_a − Σ_s n_a(s) n_b(s) / n(s)
    let mut gram = DMatrix::zeros(num_treat, num_treat);
    for a in 1..num_arms {
        for b in 1..num_arms {
            let mut v = if a == b { counts.n_a(a) as f64 } else { 0.0 };
            for s0 in 0..num_strata {
                v -= (counts.n_as[a][s0] * counts.n_as[b][s0]) as f64 / counts.n_s[s0] as f64;
            }
            gram[(a - 1, b - 1)] = v;
        }
    }
    // (A'MY)[a] = Σ_i 1{A_i=a} Y_i − Σ_s (n_a(s)/n(s)) Σ_{i∈s} Y_i
    let mut rhs = DVector::zeros(num_treat);
    for a in 1..num_arms {
        let mut v: f64 = cell_sums[a].iter().sum();
        for s0 in 0..num_strata {
            v -= counts.n_as[a][s0] as f64 / counts.n_s[s0] as f64 * stratum_sums[s0];
        }
        rhs[a - 1] = v;
    }

    let beta_star_vec = linalg::solve(&gram, &rhs)
        .map_err(|_| Error::SingularDesign("treatment indicators collinear with strata".into()))?;
    let beta_star: Vec<f64> = beta_star_vec.iter().copied().collect();

    let mut delta_star = vec![0.0f64; num_strata];
    for s0 in 0..num_strata {
        let mut fitted_treat = 0.0;
        for a in 1..num_arms {
            fitted_treat += counts.n_as[a][s0] as f64 * beta_star[a - 1];
        }
        delta_star[s0] = (stratum_sums[s0] - fitted_treat) / counts.n_s[s0] as f64;
    }

    let mut residuals = Vec::with_capacity(dataset.len());
    let mut cell_sq_resid = vec![vec![0.0f64; num_strata]; num_arms];
    let mut total_sq = 0.0;
    for obs in dataset.observations() {
        let fitted = delta_star[obs.s.0 - 1]
            + if obs.a.0 > 0 {
                beta_star[obs.a.0 - 1]
            } else {
                0.0
            };
        let u = obs.y - fitted;
        residuals.push(u);
        cell_sq_resid[obs.a.0][obs.s.0 - 1] += u * u;
        total_sq += u * u;
    }

    Ok(SfeFit {
        delta_star,
        beta_star,
        counts,
        residuals,
        cell_sq_resid,
        mean_sq_resid: total_sq / dataset.len() as f64,
        partialled_gram: gram,
    })
}

/// The fixed-effects ATE estimate is the treatment coefficient vector
/// itself.
pub fn ate_sfe(fit: &SfeFit) -> AteEstimate {
    AteEstimate {
        theta: fit.beta_star.clone(),
        kind: AteKind::FixedEffects,
        n: fit.counts.n,
    }
}
