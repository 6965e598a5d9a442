//! Wald tests of linear restrictions on the ATE vector, χ² tail utilities,
//! per-coefficient reporting, and the plain two-sample t-test baseline.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimators::AteEstimate;
use crate::linalg;
use crate::special::{gamma_p, gamma_q, normal_cdf};
use crate::types::{Dataset, LinearHypothesis, TreatmentLabel};
use crate::variance::CovarianceEstimate;

/// Two-sided 97.5% standard normal point used for 95% intervals.
pub const Z_975: f64 = 1.959964;

/// χ² CDF with `df` degrees of freedom.
pub fn chi2_cdf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Upper tail of the χ² distribution (the Wald p-value function).
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// χ² quantile: the x with CDF(x) = prob, found by a bracketed
/// Newton/bisection hybrid to |CDF(x) − prob| ≤ 1e-11.
pub fn chi2_quantile(df: usize, prob: f64) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    assert!(prob > 0.0 && prob < 1.0, "prob must lie in (0,1)");
    let k = df as f64;
    // Wilson–Hilferty starting point.
    let z = inverse_normal_rough(prob);
    let mut x = (k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)).max(1e-10);

    // Expand a bracket around the guess.
    let (mut lo, mut hi) = (0.0f64, x.max(1.0));
    while chi2_cdf(hi, df) < prob {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let ln_gamma_half = crate::special::ln_gamma(k / 2.0);
    for _ in 0..200 {
        let f = chi2_cdf(x, df) - prob;
        if f.abs() <= 1e-11 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // χ² density at x for the Newton step.
        let ln_pdf = (k / 2.0 - 1.0) * x.ln() - x / 2.0 - ln_gamma_half - (k / 2.0) * 2f64.ln();
        let pdf = ln_pdf.exp();
        let next = x - f / pdf;
        x = if pdf > 0.0 && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Coarse inverse normal CDF (Beasley–Springer–Moro style rational
/// approximation); only used to seed the χ² quantile iteration.
#[allow(clippy::excessive_precision)] // published coefficient digits kept verbatim
fn inverse_normal_rough(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * (3.387132872796366608e0
            + r * (1.3314166789178437745e2 + r * 1.9715909503065514427e3))
            / (1.0 + r * (4.2313330701600911252e1 + r * 6.871870074920579083e2));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let t = (-2.0 * r.ln()).sqrt();
    let v = t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
        / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if q < 0.0 {
        -v
    } else {
        v
    }
}

/// Outcome of a Wald test of Ψθ = c.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
    pub critical_value: f64,
}

/// Wald statistic T = n (Ψθ̂ − c)' (ΨV̂Ψ')⁻¹ (Ψθ̂ − c) against the
/// χ²_r critical value at the hypothesis's level.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // a NaN condition number must fail
pub fn wald_test(
    theta: &AteEstimate,
    v: &CovarianceEstimate,
    hyp: &LinearHypothesis,
) -> Result<TestResult> {
    let num_t = theta.theta.len();
    if v.dim() != num_t || hyp.psi().ncols() != num_t {
        return Err(Error::DimensionMismatch(format!(
            "theta has {num_t} entries, V is {}x{}, psi has {} columns",
            v.dim(),
            v.dim(),
            hyp.psi().ncols()
        )));
    }
    let r = hyp.restrictions();
    let theta_v = DVector::from_column_slice(&theta.theta);
    let c_v = DVector::from_column_slice(hyp.c());
    let diff = hyp.psi() * theta_v - c_v;
    let studentizer = hyp.psi() * v.matrix() * hyp.psi().transpose();
    let cond = linalg::condition_number(&studentizer);
    if !(cond < 1e12) {
        return Err(Error::SingularStudentizer { cond });
    }
    let solved = linalg::solve(&studentizer, &diff)
        .map_err(|_| Error::SingularStudentizer { cond })?;
    let statistic = theta.n as f64 * diff.dot(&solved);
    let critical_value = chi2_quantile(r, 1.0 - hyp.alpha());
    Ok(TestResult {
        statistic,
        df: r,
        p_value: chi2_sf(statistic, r),
        reject: statistic > critical_value,
        critical_value,
    })
}

/// One row of a coefficient table: estimate, standard error, t-statistic,
/// two-sided normal p-value, and 95% confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientReport {
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CoefficientReport {
    fn from_estimate_se(estimate: f64, std_error: f64) -> Self {
        let t_stat = estimate / std_error;
        CoefficientReport {
            estimate,
            std_error,
            t_stat,
            p_value: 2.0 * normal_cdf(-t_stat.abs()),
            ci_low: estimate - Z_975 * std_error,
            ci_high: estimate + Z_975 * std_error,
        }
    }
}

/// Report for θ̂_a with the given covariance estimate; the standard error
/// is √(V̂_aa / n) and the reference distribution is standard normal.
pub fn coefficient_report(
    theta: &AteEstimate,
    v: &CovarianceEstimate,
    a: usize,
) -> Result<CoefficientReport> {
    if a < 1 || a > theta.theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "treatment index {a} out of 1..={}",
            theta.theta.len()
        )));
    }
    if v.dim() != theta.theta.len() {
        return Err(Error::DimensionMismatch("V and theta disagree".into()));
    }
    Ok(CoefficientReport::from_estimate_se(
        theta.theta[a - 1],
        v.std_error(a, theta.n),
    ))
}

/// Variance flavor for the two-sample t-test baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TTestVariance {
    Pooled,
    Robust,
}

/// Plain two-sample t-test of arm `a` against control, ignoring strata.
/// Reference distribution is standard normal, matching the asymptotic
/// framing of everything else here.
pub fn two_sample_ttest(
    dataset: &Dataset,
    a: TreatmentLabel,
    flavor: TTestVariance,
) -> Result<CoefficientReport> {
    let mut y_t = Vec::new();
    let mut y_c = Vec::new();
    for obs in dataset.observations() {
        if obs.a == a {
            y_t.push(obs.y);
        } else if obs.a.0 == 0 {
            y_c.push(obs.y);
        }
    }
    if y_t.is_empty() {
        return Err(Error::EmptyGroup(a.0));
    }
    if y_c.is_empty() {
        return Err(Error::EmptyGroup(0));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        if v.len() < 2 {
            0.0
        } else {
            v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        }
    };
    let (n_t, n_c) = (y_t.len() as f64, y_c.len() as f64);
    let (m_t, m_c) = (mean(&y_t), mean(&y_c));
    let (v_t, v_c) = (var(&y_t, m_t), var(&y_c, m_c));
    let estimate = m_t - m_c;
    let std_error = match flavor {
        TTestVariance::Pooled => {
            let pooled = ((n_t - 1.0) * v_t + (n_c - 1.0) * v_c) / (n_t + n_c - 2.0);
            (pooled * (1.0 / n_t + 1.0 / n_c)).sqrt()
        }
        TTestVariance::Robust => (v_t / n_t + v_c / n_c).sqrt(),
    };
    Ok(CoefficientReport::from_estimate_se(estimate, std_error))
}
