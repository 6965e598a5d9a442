//! Variance estimators for the two ATE estimators, and the analytic
//! asymptotic variances they target.
//!
//! Finite-sample estimators (all on the √n·θ̂ scale):
//! - homoskedasticity-only and HC0 sandwiches for the saturated regression,
//!   computed through the regression's block structure as O(n) cell
//!   aggregates;
//! - the between-strata heterogeneity term V̂_H;
//! - the corrected estimators V̂_H + V̂_hc for both regressions;
//! - the same two sandwiches for the fixed-effects regression.
//!
//! Analytic quantities, assembled from [`PopulationMoments`]:
//! - the true asymptotic variances of both estimators;
//! - the probability limits of the homoskedasticity-only and HC0
//!   sandwiches (which differ from the true variances; that gap is what
//!   the corrected estimators repair).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{AteEstimate, SaturatedFit, SfeFit};
use crate::linalg;
use crate::moments::PopulationMoments;
use crate::types::TargetProportions;

/// Which estimator produced a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    HoSat,
    HcSat,
    NewSat,
    HoSfe,
    HcSfe,
    NewSfe,
    AnalyticSat,
    AnalyticSfe,
    /// The between-strata heterogeneity component V̂_H on its own.
    Heterogeneity,
}

impl std::fmt::Display for CovKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CovKind::HoSat => "ho_sat",
            CovKind::HcSat => "hc_sat",
            CovKind::NewSat => "new_sat",
            CovKind::HoSfe => "ho_sfe",
            CovKind::HcSfe => "hc_sfe",
            CovKind::NewSfe => "new_sfe",
            CovKind::AnalyticSat => "analytic_sat",
            CovKind::AnalyticSfe => "analytic_sfe",
            CovKind::Heterogeneity => "v_h",
        };
        write!(f, "{s}")
    }
}

/// A symmetric PSD |A|×|A| covariance matrix on the √n·θ̂ scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    matrix: DMatrix<f64>,
    kind: CovKind,
}

impl CovarianceEstimate {
    /// Validates symmetry (1e-10 relative to the max entry) and positive
    /// semi-definiteness (min eigenvalue ≥ −1e-8 × trace).
    pub fn new(matrix: DMatrix<f64>, kind: CovKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidCovariance("matrix must be square".into()));
        }
        let scale = linalg::max_norm(&matrix);
        for i in 0..matrix.nrows() {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 * scale.max(1e-300) {
                    return Err(Error::InvalidCovariance(format!(
                        "asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        let trace = matrix.trace();
        let min_eig = linalg::symmetric_eigenvalues(&matrix)[0];
        // Relative PSD tolerance on the trace scale, with an absolute floor
        // so that matrices that are zero up to rounding froth pass.
        if min_eig < -(1e-8 * trace.abs() + 1e-14 * (1.0 + scale)) {
            return Err(Error::InvalidCovariance(format!(
                "minimum eigenvalue {min_eig:.3e} below PSD tolerance"
            )));
        }
        Ok(CovarianceEstimate { matrix, kind })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Entry for treatments `a`, `b` (1-based).
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.matrix[(a - 1, b - 1)]
    }

    /// Standard error of θ̂_a given the sample size the estimate came from.
    pub fn std_error(&self, a: usize, n: usize) -> f64 {
        (self.at(a, a) / n as f64).sqrt()
    }
}

/// Homoskedasticity-only variance for the saturated regression:
/// σ̂² · R (C'C/n)⁻¹ R', which by block orthogonality collapses to
/// σ̂² Σ_s (n(s)/n)² [ diag(n/n_a(s)) + (n/n_0(s)) ιι' ].
pub fn v_ho_saturated(fit: &SaturatedFit) -> Result<CovarianceEstimate> {
    let num_t = fit.num_treatments();
    let n = fit.n() as f64;
    let mut m = DMatrix::zeros(num_t, num_t);
    for s in 1..=fit.num_strata() {
        let ns = fit.counts.n_s[s - 1] as f64;
        let w = (ns / n) * (ns / n);
        let control = n / fit.counts.n_as[0][s - 1] as f64;
        for a in 0..num_t {
            for b in 0..num_t {
                m[(a, b)] += w * control;
            }
            m[(a, a)] += w * n / fit.counts.n_as[a + 1][s - 1] as f64;
        }
    }
    CovarianceEstimate::new(m * fit.mean_squared_residual(), CovKind::HoSat)
}

/// HC0 sandwich for the saturated regression, through its closed cell
/// structure: Σ_s [ (n(s)/n_0(s))² q_{0s}/n · ιι' + diag((n(s)/n_a(s))² q_{as}/n) ]
/// where q_{as} is the within-cell sum of squared residuals.
pub fn v_hc_saturated(fit: &SaturatedFit) -> Result<CovarianceEstimate> {
    let num_t = fit.num_treatments();
    let n = fit.n() as f64;
    let mut m = DMatrix::zeros(num_t, num_t);
    for s in 1..=fit.num_strata() {
        let ns = fit.counts.n_s[s - 1] as f64;
        let r0 = ns / fit.counts.n_as[0][s - 1] as f64;
        let control_term = r0 * r0 * fit.cell_sq_residual_sum(0, s) / n;
        for a in 0..num_t {
            for b in 0..num_t {
                m[(a, b)] += control_term;
            }
            let ra = ns / fit.counts.n_as[a + 1][s - 1] as f64;
            m[(a, a)] += ra * ra * fit.cell_sq_residual_sum(a + 1, s) / n;
        }
    }
    CovarianceEstimate::new(m, CovKind::HcSat)
}

/// Between-strata heterogeneity term:
/// V̂_H = Σ_s (n(s)/n) (β̂_a(s) − θ_a : a)(β̂_a(s) − θ_a : a)'.
///
/// `center` is the ATE vector the deviations are taken around: the
/// saturated θ̂ in the saturated-regression correction, the fixed-effects
/// θ̂* in the fixed-effects correction.
pub fn v_h_hat(fit: &SaturatedFit, center: &AteEstimate) -> Result<CovarianceEstimate> {
    let num_t = fit.num_treatments();
    if center.theta.len() != num_t {
        return Err(Error::DimensionMismatch(format!(
            "center has {} entries, fit has {num_t} treatments",
            center.theta.len()
        )));
    }
    if center.n != fit.n() {
        return Err(Error::DimensionMismatch(
            "ATE estimate and fit come from different sample sizes".into(),
        ));
    }
    let n = fit.n() as f64;
    let mut m = DMatrix::zeros(num_t, num_t);
    for s in 1..=fit.num_strata() {
        let w = fit.counts.n_s[s - 1] as f64 / n;
        let d = DVector::from_iterator(
            num_t,
            (1..=num_t).map(|a| fit.beta_at(a, s) - center.theta[a - 1]),
        );
        m += w * &d * d.transpose();
    }
    CovarianceEstimate::new(m, CovKind::Heterogeneity)
}

fn add(a: &CovarianceEstimate, b: &CovarianceEstimate, kind: CovKind) -> Result<CovarianceEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("covariance dimensions differ".into()));
    }
    CovarianceEstimate::new(a.matrix() + b.matrix(), kind)
}

/// Consistent estimator for the saturated regression: V̂_H + V̂_hc.
pub fn v_new_saturated(fit: &SaturatedFit) -> Result<CovarianceEstimate> {
    let theta = crate::estimators::ate_saturated(fit);
    let vh = v_h_hat(fit, &theta)?;
    let hc = v_hc_saturated(fit)?;
    add(&vh, &hc, CovKind::NewSat)
}

/// Homoskedasticity-only variance for the fixed-effects regression:
/// σ̂² · n (A'MA)⁻¹.
pub fn v_ho_sfe(fit: &SfeFit) -> Result<CovarianceEstimate> {
    let inv = linalg::invert(fit.partialled_gram())?;
    let m = inv * (fit.mean_squared_residual() * fit.n() as f64);
    let m = 0.5 * (&m + m.transpose());
    CovarianceEstimate::new(m, CovKind::HoSfe)
}

/// HC0 sandwich for the fixed-effects regression, extracted from the full
/// [strata dummies, treatment dummies] design via its cell aggregates:
/// n · W (C'diag(û²)C) W' with W the treatment rows of (C'C)⁻¹.
pub fn v_hc_sfe(fit: &SfeFit) -> Result<CovarianceEstimate> {
    let num_t = fit.num_treatments();
    let num_s = fit.num_strata();
    let p = num_s + num_t;
    let counts = &fit.counts;

    let mut gram = DMatrix::zeros(p, p);
    for s0 in 0..num_s {
        gram[(s0, s0)] = counts.n_s[s0] as f64;
        for a in 1..=num_t {
            gram[(s0, num_s + a - 1)] = counts.n_as[a][s0] as f64;
            gram[(num_s + a - 1, s0)] = counts.n_as[a][s0] as f64;
        }
    }
    for a in 1..=num_t {
        gram[(num_s + a - 1, num_s + a - 1)] = counts.n_a(a) as f64;
    }

    let mut meat = DMatrix::zeros(p, p);
    for s0 in 0..num_s {
        let s = s0 + 1;
        let q_s: f64 = (0..=num_t).map(|a| fit.cell_sq_residual_sum(a, s)).sum();
        meat[(s0, s0)] = q_s;
        for a in 1..=num_t {
            let q_as = fit.cell_sq_residual_sum(a, s);
            meat[(s0, num_s + a - 1)] = q_as;
            meat[(num_s + a - 1, s0)] = q_as;
        }
    }
    for a in 1..=num_t {
        let q_a: f64 = (1..=num_s).map(|s| fit.cell_sq_residual_sum(a, s)).sum();
        meat[(num_s + a - 1, num_s + a - 1)] = q_a;
    }

    let inv = linalg::invert(&gram)?;
    let w = inv.rows(num_s, num_t).into_owned();
    let m = (&w * meat * w.transpose()) * fit.n() as f64;
    let m = 0.5 * (&m + m.transpose());
    CovarianceEstimate::new(m, CovKind::HcSfe)
}

/// Consistent estimator for the fixed-effects regression: V̂_H built from
/// the saturated coefficients around θ̂*, plus the *saturated* regression's
/// HC0 sandwich (which targets V_Ỹ; the fixed-effects regression's own
/// sandwich absorbs part of the heterogeneity into its residuals and would
/// double-count it here). Intended for constant-proportion, strongly
/// balanced designs; callers can consult
/// [`SfeFit::proportions_approximately_constant`] and flag output when
/// that fails.
pub fn v_new_sfe(fit: &SfeFit, sat_fit: &SaturatedFit) -> Result<CovarianceEstimate> {
    if fit.n() != sat_fit.n() || fit.num_treatments() != sat_fit.num_treatments() {
        return Err(Error::DimensionMismatch(
            "fixed-effects and saturated fits disagree on sample".into(),
        ));
    }
    let center = crate::estimators::ate_sfe(fit);
    let vh = v_h_hat(sat_fit, &center)?;
    let hc = v_hc_saturated(sat_fit)?;
    add(&vh, &hc, CovKind::NewSfe)
}

/// Plug-in estimate of the assignment-noise variance component V_A that the
/// fixed-effects estimator picks up when the randomization scheme does not
/// achieve strong balance (τ(s) > 0).
///
/// Built entirely from the saturated fit: m̂_a(s) is the (a, s) cell mean
/// minus the stratum-size-weighted mean of arm a, ξ̂_a(s) subtracts the
/// pooled-share-weighted average across arms, and the within-stratum
/// assignment covariance is the multinomial form
/// τ(s)[diag(π̂_a) − π̂π̂'] with pooled shares π̂_a = n_a/n.
pub fn v_a_hat(fit: &SaturatedFit, balance: &BalanceProfile) -> Result<CovarianceEstimate> {
    let num_t = fit.num_treatments();
    let num_arms = num_t + 1;
    let num_strata = fit.num_strata();
    if balance.tau.len() != num_strata {
        return Err(Error::DimensionMismatch(
            "balance profile does not cover all strata".into(),
        ));
    }
    let n = fit.n() as f64;
    let pooled: Vec<f64> = (0..num_arms).map(|a| fit.counts.n_a(a) as f64 / n).collect();
    // m̂_a(s), centered by the arm's weighted grand mean.
    let mut m_hat = vec![vec![0.0f64; num_strata]; num_arms];
    for a in 0..num_arms {
        let grand: f64 = (1..=num_strata)
            .map(|s| fit.counts.n_s[s - 1] as f64 / n * fit.cell_mean(a, s))
            .sum();
        for s in 1..=num_strata {
            m_hat[a][s - 1] = fit.cell_mean(a, s) - grand;
        }
    }
    let mut out = DMatrix::zeros(num_t, num_t);
    for s0 in 0..num_strata {
        let tau = balance.tau[s0];
        if tau == 0.0 {
            continue;
        }
        let bar: f64 = (0..num_arms).map(|a| pooled[a] * m_hat[a][s0]).sum();
        let xi: Vec<f64> = (0..num_arms).map(|a| m_hat[a][s0] - bar).collect();
        let sd = |a: usize, b: usize| {
            tau * (if a == b { pooled[a] } else { 0.0 } - pooled[a] * pooled[b])
        };
        let w = fit.counts.n_s[s0] as f64 / n;
        for a in 1..=num_t {
            for b in 1..=num_t {
                let term = xi[a] * xi[b] * sd(a, b) / (pooled[a] * pooled[b])
                    - xi[a] * xi[0] * sd(a, 0) / (pooled[a] * pooled[0])
                    - xi[b] * xi[0] * sd(b, 0) / (pooled[b] * pooled[0])
                    + xi[0] * xi[0] * sd(0, 0) / (pooled[0] * pooled[0]);
                out[(a - 1, b - 1)] += w * term;
            }
        }
    }
    CovarianceEstimate::new(out, CovKind::Heterogeneity)
}

/// Variance for the fixed-effects test under a known balance profile:
/// V̂_H + V̂_hc(saturated) + V̂_A(τ). Reduces exactly to [`v_new_sfe`]
/// under strong balance (τ ≡ 0); with τ(s) = 1 it remains consistent under
/// simple random sampling, where [`v_new_sfe`] understates the variance.
pub fn v_new_sfe_with_balance(
    fit: &SfeFit,
    sat_fit: &SaturatedFit,
    balance: &BalanceProfile,
) -> Result<CovarianceEstimate> {
    let base = v_new_sfe(fit, sat_fit)?;
    let va = v_a_hat(sat_fit, balance)?;
    add(&base, &va, CovKind::NewSfe)
}

// ---------------------------------------------------------------------------
// Analytic asymptotic variances and sandwich probability limits.
// ---------------------------------------------------------------------------

fn check_dims(m: &PopulationMoments, num_arms: usize, num_strata: usize) -> Result<()> {
    if m.num_arms() != num_arms || m.num_strata() != num_strata {
        return Err(Error::DimensionMismatch(format!(
            "moments cover {} arms x {} strata, expected {num_arms} x {num_strata}",
            m.num_arms(),
            m.num_strata()
        )));
    }
    Ok(())
}

fn v_h_matrix(m: &PopulationMoments) -> DMatrix<f64> {
    let num_t = m.num_arms() - 1;
    let mut out = DMatrix::zeros(num_t, num_t);
    for s0 in 0..m.num_strata() {
        let d = DVector::from_iterator(
            num_t,
            (1..=num_t).map(|a| m.cond_m[a][s0] - m.cond_m[0][s0]),
        );
        out += m.p_s[s0] * &d * d.transpose();
    }
    out
}

fn v_y_matrix(m: &PopulationMoments, pi: &TargetProportions) -> DMatrix<f64> {
    let num_t = m.num_arms() - 1;
    let mut out = DMatrix::zeros(num_t, num_t);
    for s0 in 0..m.num_strata() {
        let control = m.p_s[s0] * m.cond_var[0][s0] / pi.get(0, s0 + 1);
        for a in 0..num_t {
            for b in 0..num_t {
                out[(a, b)] += control;
            }
            out[(a, a)] += m.p_s[s0] * m.cond_var[a + 1][s0] / pi.get(a + 1, s0 + 1);
        }
    }
    out
}

/// True asymptotic variance of the saturated-regression ATE: V_H + V_Ỹ.
pub fn v_analytic_sat(
    m: &PopulationMoments,
    pi: &TargetProportions,
) -> Result<CovarianceEstimate> {
    check_dims(m, pi.num_treatments() + 1, pi.num_strata())?;
    CovarianceEstimate::new(v_h_matrix(m) + v_y_matrix(m, pi), CovKind::AnalyticSat)
}

/// Per-stratum balance parameters τ(s) ∈ [0,1]: 1 for simple random
/// sampling, 0 for strongly balanced schemes such as stratified blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceProfile {
    pub tau: Vec<f64>,
}

impl BalanceProfile {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidModelSpec("tau entries must lie in [0,1]".into()));
        }
        Ok(BalanceProfile { tau })
    }

    pub fn constant(tau: f64, num_strata: usize) -> Result<Self> {
        BalanceProfile::new(vec![tau; num_strata])
    }
}

/// ξ_a(s) = E[m_a|s] − Σ_{a'∈A₀} π_{a'} E[m_{a'}|s] for all arms.
fn xi(m: &PopulationMoments, pi_const: &[f64], s0: usize) -> Vec<f64> {
    let bar: f64 = (0..m.num_arms())
        .map(|a| pi_const[a] * m.cond_m[a][s0])
        .sum();
    (0..m.num_arms()).map(|a| m.cond_m[a][s0] - bar).collect()
}

/// True asymptotic variance of the fixed-effects ATE under constant
/// proportions: V_H + V_Ỹ + V_A, where V_A carries the assignment-noise
/// contribution scaled by the balance profile (zero under strong balance).
///
/// The within-stratum assignment covariance is taken as the multinomial
/// form τ(s)[diag(π_a : a ∈ A₀) − ππ'] over all arms including control.
pub fn v_analytic_sfe(
    m: &PopulationMoments,
    pi_const: &[f64],
    balance: &BalanceProfile,
) -> Result<CovarianceEstimate> {
    let num_arms = m.num_arms();
    let num_t = num_arms - 1;
    if pi_const.len() != num_arms {
        return Err(Error::DimensionMismatch(format!(
            "pi has {} entries, expected {num_arms}",
            pi_const.len()
        )));
    }
    if balance.tau.len() != m.num_strata() {
        return Err(Error::DimensionMismatch("balance profile length".into()));
    }
    let pi = TargetProportions::constant(pi_const, m.num_strata())?;
    check_dims(m, num_arms, m.num_strata())?;

    let mut v_a = DMatrix::zeros(num_t, num_t);
    for s0 in 0..m.num_strata() {
        let tau = balance.tau[s0];
        if tau == 0.0 {
            continue;
        }
        let x = xi(m, pi_const, s0);
        // sigma_d[a][b] = tau (1{a=b} pi_a − pi_a pi_b) over all arms.
        let sd = |a: usize, b: usize| {
            tau * (if a == b { pi_const[a] } else { 0.0 } - pi_const[a] * pi_const[b])
        };
        for a in 1..=num_t {
            for b in 1..=num_t {
                let term = x[a] * x[b] * sd(a, b) / (pi_const[a] * pi_const[b])
                    - x[a] * x[0] * sd(a, 0) / (pi_const[a] * pi_const[0])
                    - x[b] * x[0] * sd(b, 0) / (pi_const[b] * pi_const[0])
                    + x[0] * x[0] * sd(0, 0) / (pi_const[0] * pi_const[0]);
                v_a[(a - 1, b - 1)] += m.p_s[s0] * term;
            }
        }
    }
    CovarianceEstimate::new(
        v_h_matrix(m) + v_y_matrix(m, &pi) + v_a,
        CovKind::AnalyticSfe,
    )
}

/// Probability limit of the homoskedasticity-only sandwich in the
/// saturated regression:
/// (Σ_{a,s} p(s) π_a(s) σ²_Ỹ(a)(s)) · [Σ_s p(s)/π_0(s) ιι' + diag(Σ_s p(s)/π_a(s))].
pub fn sat_ho_limit(m: &PopulationMoments, pi: &TargetProportions) -> Result<CovarianceEstimate> {
    check_dims(m, pi.num_treatments() + 1, pi.num_strata())?;
    let num_t = pi.num_treatments();
    let mut pooled = 0.0;
    for arm in 0..m.num_arms() {
        for s0 in 0..m.num_strata() {
            pooled += m.p_s[s0] * pi.get(arm, s0 + 1) * m.cond_var[arm][s0];
        }
    }
    let mut shape = DMatrix::zeros(num_t, num_t);
    for s0 in 0..m.num_strata() {
        let control = m.p_s[s0] / pi.get(0, s0 + 1);
        for a in 0..num_t {
            for b in 0..num_t {
                shape[(a, b)] += control;
            }
            shape[(a, a)] += m.p_s[s0] / pi.get(a + 1, s0 + 1);
        }
    }
    CovarianceEstimate::new(shape * pooled, CovKind::AnalyticSat)
}

/// Probability limit of the HC0 sandwich in the saturated regression: V_Ỹ.
pub fn sat_hc_limit(m: &PopulationMoments, pi: &TargetProportions) -> Result<CovarianceEstimate> {
    check_dims(m, pi.num_treatments() + 1, pi.num_strata())?;
    CovarianceEstimate::new(v_y_matrix(m, pi), CovKind::AnalyticSat)
}

/// Probability limit of the homoskedasticity-only sandwich in the
/// fixed-effects regression (constant proportions):
/// (Σ_{a,s} p π_a σ²_Ỹ(a)(s) + Σ_s p ς²_H(s)) · [ (1/π_0) ιι' + diag(1/π_a) ]
/// with ς²_H(s) the within-stratum variance of E[m_A|s] across arms.
pub fn sfe_ho_limit(m: &PopulationMoments, pi_const: &[f64]) -> Result<CovarianceEstimate> {
    let num_arms = m.num_arms();
    let num_t = num_arms - 1;
    if pi_const.len() != num_arms {
        return Err(Error::DimensionMismatch("pi length".into()));
    }
    let mut pooled = 0.0;
    for s0 in 0..m.num_strata() {
        for arm in 0..num_arms {
            pooled += m.p_s[s0] * pi_const[arm] * m.cond_var[arm][s0];
        }
        let mean: f64 = (0..num_arms)
            .map(|a| pi_const[a] * m.cond_m[a][s0])
            .sum();
        let second: f64 = (0..num_arms)
            .map(|a| pi_const[a] * m.cond_m[a][s0] * m.cond_m[a][s0])
            .sum();
        pooled += m.p_s[s0] * (second - mean * mean);
    }
    let mut shape = DMatrix::zeros(num_t, num_t);
    for a in 0..num_t {
        for b in 0..num_t {
            shape[(a, b)] += 1.0 / pi_const[0];
        }
        shape[(a, a)] += 1.0 / pi_const[a + 1];
    }
    CovarianceEstimate::new(shape * pooled, CovKind::AnalyticSfe)
}

/// Probability limit of the HC0 sandwich in the fixed-effects regression
/// (constant proportions):
/// diag(Σ_s p/π_a [σ²_Ỹ(a)(s) + ξ_a(s)²]) + ιι' Σ_s p/π_0 [σ²_Ỹ(0)(s) + ξ_0(s)²].
pub fn sfe_hc_limit(m: &PopulationMoments, pi_const: &[f64]) -> Result<CovarianceEstimate> {
    let num_arms = m.num_arms();
    let num_t = num_arms - 1;
    if pi_const.len() != num_arms {
        return Err(Error::DimensionMismatch("pi length".into()));
    }
    let mut out = DMatrix::zeros(num_t, num_t);
    for s0 in 0..m.num_strata() {
        let x = xi(m, pi_const, s0);
        let control = m.p_s[s0] / pi_const[0] * (m.cond_var[0][s0] + x[0] * x[0]);
        for a in 0..num_t {
            for b in 0..num_t {
                out[(a, b)] += control;
            }
            out[(a, a)] +=
                m.p_s[s0] / pi_const[a + 1] * (m.cond_var[a + 1][s0] + x[a + 1] * x[a + 1]);
        }
    }
    CovarianceEstimate::new(out, CovKind::AnalyticSfe)
}

/// ς²_H = Σ_s p(s) (E[m_1 − m_0 | s])², the scalar heterogeneity variance
/// for the single-treatment case.
pub fn scalar_varsigma_h(m: &PopulationMoments) -> f64 {
    (0..m.num_strata())
        .map(|s0| {
            let d = m.cond_m[1][s0] - m.cond_m[0][s0];
            m.p_s[s0] * d * d
        })
        .sum()
}

/// ς²_Ỹ = Σ_s p(s) [σ²_Ỹ(0)(s)/π_0 + σ²_Ỹ(1)(s)/π_1] for the
/// single-treatment case with constant proportions.
pub fn scalar_varsigma_y(m: &PopulationMoments, pi1: f64) -> f64 {
    (0..m.num_strata())
        .map(|s0| {
            m.p_s[s0] * (m.cond_var[0][s0] / (1.0 - pi1) + m.cond_var[1][s0] / pi1)
        })
        .sum()
}

/// ς²_A = (1−2π₁)²/(π₁(1−π₁)) Σ_s τ(s) p(s) (E[m_1 − m_0|s])² for the
/// single-treatment case.
pub fn scalar_varsigma_a(m: &PopulationMoments, pi1: f64, balance: &BalanceProfile) -> f64 {
    let factor = (1.0 - 2.0 * pi1).powi(2) / (pi1 * (1.0 - pi1));
    factor
        * (0..m.num_strata())
            .map(|s0| {
                let d = m.cond_m[1][s0] - m.cond_m[0][s0];
                balance.tau[s0] * m.p_s[s0] * d * d
            })
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{ate_saturated, fit_saturated, fit_sfe};
    use crate::rng::RngSeed;
    use crate::types::{Dataset, Observation};
    use rand::Rng;

    fn dataset(rows: &[(f64, usize, usize)], num_treat: usize, num_strata: usize) -> Dataset {
        let obs = rows
            .iter()
            .map(|&(y, a, s)| Observation::new(y, a, s))
            .collect();
        Dataset::new(obs, num_treat, num_strata).unwrap()
    }

    fn random_dataset(seed: u64, n: usize, num_treat: usize, num_strata: usize) -> Dataset {
        let mut rng = RngSeed::new(seed, 100).rng();
        let mut rows = Vec::with_capacity(n);
        // Guarantee every cell is occupied, then fill at random.
        for a in 0..=num_treat {
            for s in 1..=num_strata {
                rows.push((rng.gen::<f64>() * 4.0 - 2.0, a, s));
            }
        }
        while rows.len() < n {
            let a = rng.gen_range(0..=num_treat);
            let s = rng.gen_range(1..=num_strata);
            rows.push((rng.gen::<f64>() * 4.0 - 2.0 + a as f64 + 0.3 * s as f64, a, s));
        }
        dataset(&rows, num_treat, num_strata)
    }

    #[test]
    fn zero_residuals_zero_sandwiches() {
        // Cell-constant outcomes have zero residuals everywhere.
        let ds = dataset(
            &[(1.0, 0, 1), (1.0, 0, 1), (4.0, 1, 1), (2.0, 0, 2), (5.0, 1, 2)],
            1,
            2,
        );
        let sat = fit_saturated(&ds).unwrap();
        assert_eq!(v_ho_saturated(&sat).unwrap().at(1, 1), 0.0);
        assert_eq!(v_hc_saturated(&sat).unwrap().at(1, 1), 0.0);
    }

    #[test]
    fn ho_single_cell_closed_form() {
        // |A|=1, |S|=1: V̂_ho = s²(1/π̂₁ + 1/π̂₀) with π̂_a = n_a/n.
        let rows = [
            (1.0, 0, 1),
            (2.0, 0, 1),
            (4.0, 0, 1),
            (3.0, 1, 1),
            (8.0, 1, 1),
        ];
        let ds = dataset(&rows, 1, 1);
        let sat = fit_saturated(&ds).unwrap();
        let s2 = sat.mean_squared_residual();
        let expect = s2 * (5.0 / 2.0 + 5.0 / 3.0);
        assert!((v_ho_saturated(&sat).unwrap().at(1, 1) - expect).abs() < 1e-12);
    }

    #[test]
    fn v_h_two_strata_hand_case() {
        // Weights 0.4/0.6 and contrasts deviating ±d from their mean give
        // Σ w (dev)² = 0.4·(0.6·2d)² + 0.6·(0.4·2d)²   with θ̂ the weighted
        // mean of the two contrasts.
        let d = 0.5f64;
        // Build outcomes: stratum 1 (4 units), stratum 2 (6 units); contrast
        // -d in stratum 1 and +d in stratum 2, constant cells.
        let mut rows = vec![];
        for _ in 0..2 {
            rows.push((0.0, 0, 1));
            rows.push((-d, 1, 1));
        }
        for _ in 0..3 {
            rows.push((0.0, 0, 2));
            rows.push((d, 1, 2));
        }
        let ds = dataset(&rows, 1, 2);
        let sat = fit_saturated(&ds).unwrap();
        let theta = ate_saturated(&sat);
        // theta = 0.4(-d) + 0.6(d) = 0.2 d
        assert!((theta.theta[0] - 0.2 * d).abs() < 1e-12);
        let vh = v_h_hat(&sat, &theta).unwrap();
        let expect = 0.4 * (1.2 * d).powi(2) + 0.6 * (0.8 * d).powi(2);
        assert!((vh.at(1, 1) - expect).abs() < 1e-12);
    }

    #[test]
    fn constant_contrasts_zero_v_h() {
        let rows = [
            (0.0, 0, 1),
            (0.0, 0, 1),
            (2.0, 1, 1),
            (1.0, 0, 2),
            (3.0, 1, 2),
        ];
        let ds = dataset(&rows, 1, 2);
        let sat = fit_saturated(&ds).unwrap();
        let theta = ate_saturated(&sat);
        let vh = v_h_hat(&sat, &theta).unwrap();
        assert!(vh.at(1, 1).abs() < 1e-14);
    }

    #[test]
    fn decomposition_identities_exact() {
        for seed in 0..20 {
            let ds = random_dataset(seed, 120, 2, 3);
            let sat = fit_saturated(&ds).unwrap();
            let sfe = fit_sfe(&ds).unwrap();
            let new_sat = v_new_saturated(&sat).unwrap();
            let hc_sat = v_hc_saturated(&sat).unwrap();
            let vh_sat = v_h_hat(&sat, &ate_saturated(&sat)).unwrap();
            let new_sfe = v_new_sfe(&sfe, &sat).unwrap();
            let vh_sfe = v_h_hat(&sat, &crate::estimators::ate_sfe(&sfe)).unwrap();
            for a in 1..=2 {
                for b in 1..=2 {
                    assert_eq!(
                        new_sat.at(a, b),
                        hc_sat.at(a, b) + vh_sat.at(a, b),
                        "sat decomposition"
                    );
                    assert_eq!(
                        new_sfe.at(a, b),
                        hc_sat.at(a, b) + vh_sfe.at(a, b),
                        "sfe decomposition"
                    );
                }
            }
        }
    }

    #[test]
    fn sfe_ho_reduces_to_pooled_two_sample_form() {
        // |A|=1, |S|=1: V̂*_ho = σ̂² n (1/n₁ + 1/n₀) / ... specifically
        // n·σ̂²/(A'MA) with A'MA = n₁n₀/n.
        let rows = [
            (1.0, 0, 1),
            (2.0, 0, 1),
            (4.0, 0, 1),
            (3.0, 1, 1),
            (8.0, 1, 1),
        ];
        let ds = dataset(&rows, 1, 1);
        let sfe = fit_sfe(&ds).unwrap();
        let s2 = sfe.mean_squared_residual();
        let expect = s2 * 5.0 / (2.0 * 3.0 / 5.0);
        assert!((v_ho_sfe(&sfe).unwrap().at(1, 1) - expect).abs() < 1e-12);
    }

    #[test]
    fn analytic_sfe_equals_sat_under_strong_balance() {
        // tau = 0 kills the assignment term.
        let m = synthetic_moments();
        let pi = [0.5, 0.2, 0.3];
        let t_pi = TargetProportions::constant(&pi, 2).unwrap();
        let sat = v_analytic_sat(&m, &t_pi).unwrap();
        let sfe = v_analytic_sfe(&m, &pi, &BalanceProfile::constant(0.0, 2).unwrap()).unwrap();
        for a in 1..=2 {
            for b in 1..=2 {
                assert!((sat.at(a, b) - sfe.at(a, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_sfe_scalar_route_agreement() {
        // |A|=1: assignment term equals the scalar closed form, and the
        // pi=1/2 case vanishes.
        let m = synthetic_moments_one_treatment();
        for &pi1 in &[0.3, 0.5, 0.62] {
            let pi = [1.0 - pi1, pi1];
            let balance = BalanceProfile::constant(1.0, 3).unwrap();
            let sfe = v_analytic_sfe(&m, &pi, &balance).unwrap();
            let scalar = scalar_varsigma_h(&m)
                + scalar_varsigma_y(&m, pi1)
                + scalar_varsigma_a(&m, pi1, &balance);
            assert!(
                (sfe.at(1, 1) - scalar).abs() < 1e-12,
                "pi1={pi1}: {} vs {scalar}",
                sfe.at(1, 1)
            );
        }
        let balance = BalanceProfile::constant(1.0, 3).unwrap();
        let at_half = v_analytic_sfe(&m, &[0.5, 0.5], &balance).unwrap();
        let sat = v_analytic_sat(
            &m,
            &TargetProportions::constant(&[0.5, 0.5], 3).unwrap(),
        )
        .unwrap();
        assert!((at_half.at(1, 1) - sat.at(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn v_y_off_diagonal_structure() {
        // |A|=2 with pi_a(s)=1/3: off-diagonal of V_Ỹ is 3 Σ p σ²_Ỹ(0)(s).
        let m = synthetic_moments();
        let pi = TargetProportions::constant(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 2).unwrap();
        let v = sat_hc_limit(&m, &pi).unwrap();
        let expect: f64 = (0..2).map(|s0| m.p_s[s0] * m.cond_var[0][s0] * 3.0).sum();
        assert!((v.at(1, 2) - expect).abs() < 1e-12);
    }

    fn synthetic_moments() -> PopulationMoments {
        // 3 arms (control + 2), 2 strata.
        PopulationMoments {
            p_s: vec![0.4, 0.6],
            p_s_se: vec![0.0, 0.0],
            cond_m: vec![
                vec![0.3, -0.2],
                vec![0.5, -1.0 / 3.0],
                vec![-0.6, 0.4],
            ],
            cond_m_se: vec![vec![0.0; 2]; 3],
            cond_var: vec![vec![1.0, 1.5], vec![0.8, 1.1], vec![1.2, 0.9]],
            cond_var_se: vec![vec![0.0; 2]; 3],
            big_m: vec![0.0; 3],
            big_m_se: vec![0.0; 3],
            mc_budget: 0,
            seed: RngSeed::new(0, 0),
        }
    }

    fn synthetic_moments_one_treatment() -> PopulationMoments {
        PopulationMoments {
            p_s: vec![0.25, 0.5, 0.25],
            p_s_se: vec![0.0; 3],
            cond_m: vec![vec![0.2, 0.1, -0.4], vec![-0.3, 0.25, -0.2]],
            cond_m_se: vec![vec![0.0; 3]; 2],
            cond_var: vec![vec![1.0, 0.7, 1.4], vec![0.9, 1.3, 0.6]],
            cond_var_se: vec![vec![0.0; 3]; 2],
            big_m: vec![0.0; 2],
            big_m_se: vec![0.0; 2],
            mc_budget: 0,
            seed: RngSeed::new(0, 0),
        }
    }
}
