//! Asymptotic local power of Wald tests: the exact noncentral-χ² case when
//! the studentizer matches the true asymptotic variance, and Monte Carlo
//! evaluation of the generalized quadratic form when it does not.

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypothesis::{chi2_quantile, chi2_sf};
use crate::linalg;
use crate::rng::RngSeed;

/// Symmetric PSD square root via eigendecomposition. Eigenvalues within
/// −1e-10·trace of zero are clamped to zero; below that is an error.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidCovariance("psd_sqrt needs a square matrix".into()));
    }
    let scale = linalg::max_norm(m);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale.max(1e-300) {
                return Err(Error::InvalidCovariance("psd_sqrt needs symmetry".into()));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let tol = -1e-10 * m.trace().abs().max(1e-300);
    let mut roots = DVector::zeros(m.nrows());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l < tol {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {l:.3e} is negative beyond tolerance"
            )));
        }
        roots[i] = l.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Noncentral χ² survival function P(X > x) with `df` degrees of freedom
/// and noncentrality `nc`, as the Poisson(nc/2) mixture of central tails.
/// The series is truncated once the remaining Poisson mass drops below
/// 1e-12 (the central tails are bounded by 1, so that bounds the error).
pub fn noncentral_chi2_sf(x: f64, df: usize, nc: f64) -> f64 {
    assert!(x >= 0.0 && nc >= 0.0 && df >= 1);
    if x == 0.0 {
        return 1.0;
    }
    if nc == 0.0 {
        return chi2_sf(x, df);
    }
    let lambda = nc / 2.0;
    let mut weight = (-lambda).exp();
    let mut remaining = 1.0 - weight;
    let mut total = weight * chi2_sf(x, df);
    let mut j = 0usize;
    while remaining > 1e-12 && j < 100_000 {
        j += 1;
        weight *= lambda / j as f64;
        remaining -= weight;
        total += weight * chi2_sf(x, df + 2 * j);
    }
    // Whatever Poisson mass was never visited contributes at most
    // `remaining` to the tail; leave it out, consistent with a lower-bias
    // truncation below 1e-12.
    total.min(1.0)
}

/// A local-alternative power problem: true asymptotic covariance of the
/// estimator, the probability limit of the studentizer, the restriction
/// matrix, the local drift λ of √n(Ψθ − c), and the test level.
#[derive(Debug, Clone)]
pub struct LocalPowerProblem {
    pub v: DMatrix<f64>,
    pub v_stud: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub alpha: f64,
}

impl LocalPowerProblem {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN eigenvalues must fail
    pub fn new(
        v: DMatrix<f64>,
        v_stud: DMatrix<f64>,
        psi: DMatrix<f64>,
        lambda: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let dim = v.nrows();
        if v.ncols() != dim || v_stud.nrows() != dim || v_stud.ncols() != dim {
            return Err(Error::InvalidPowerProblem("covariance dimensions differ".into()));
        }
        if psi.ncols() != dim {
            return Err(Error::InvalidPowerProblem(format!(
                "psi has {} columns, covariances are {dim}x{dim}",
                psi.ncols()
            )));
        }
        let r = psi.nrows();
        if r == 0 || r > dim {
            return Err(Error::InvalidPowerProblem("psi must have 1..=dim rows".into()));
        }
        if lambda.len() != r {
            return Err(Error::InvalidPowerProblem("lambda length must equal rank".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidPowerProblem("alpha must lie in (0,1)".into()));
        }
        for (name, m) in [("v", &v), ("v_stud", &v_stud)] {
            let min_eig = linalg::symmetric_eigenvalues(m)[0];
            if !(min_eig > 1e-10 * m.trace().abs()) {
                return Err(Error::InvalidPowerProblem(format!(
                    "{name} is not positive definite (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
        let svd = psi.clone().svd(false, false);
        let max_sv = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&sv| sv > 1e-10 * max_sv)
            .count();
        if rank < r {
            return Err(Error::RankDeficient { rank, rows: r });
        }
        Ok(LocalPowerProblem {
            v,
            v_stud,
            psi,
            lambda,
            alpha,
        })
    }

    /// Noncentrality μ = λ'(ΨVΨ')⁻¹λ of the exactly studentized limit.
    pub fn noncentrality(&self) -> Result<f64> {
        let a = &self.psi * &self.v * self.psi.transpose();
        let l = DVector::from_column_slice(&self.lambda);
        let x = linalg::solve(&a, &l)?;
        Ok(l.dot(&x))
    }

    fn studentizers_match(&self) -> bool {
        (&self.v - &self.v_stud).norm() <= 1e-10 * self.v.norm()
    }
}

/// How to evaluate the limiting rejection probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMethod {
    /// Noncentral χ² tail; valid only when the studentizer limit equals
    /// the true asymptotic variance.
    ClosedForm,
    /// Sample the limiting quadratic form directly.
    MonteCarlo,
}

/// A power value, with the Monte Carlo standard error when simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub value: f64,
    /// Zero for the closed form.
    pub std_error: f64,
}

/// Limiting local power of the Wald test described by `problem`.
///
/// The closed form is the noncentral χ²_r upper tail at χ²_{r,1−α} with
/// noncentrality λ'(ΨVΨ')⁻¹λ. The Monte Carlo branch draws ξ ~ N(0, I_r)
/// and evaluates the quadratic form
/// (ξ+λ̃)'(ΨVΨ')^{1/2}(ΨV_studΨ')⁻¹(ΨVΨ')^{1/2}(ξ+λ̃) with
/// λ̃ = (ΨVΨ')^{−1/2}λ, in deterministic chunks.
pub fn local_power(
    problem: &LocalPowerProblem,
    method: PowerMethod,
    mc_reps: u64,
    seed: RngSeed,
) -> Result<PowerEstimate> {
    let r = problem.psi.nrows();
    let crit = chi2_quantile(r, 1.0 - problem.alpha);
    match method {
        PowerMethod::ClosedForm => {
            if !problem.studentizers_match() {
                return Err(Error::MethodMismatch(
                    "closed form requires the studentizer limit to equal the true variance"
                        .into(),
                ));
            }
            let mu = problem.noncentrality()?;
            Ok(PowerEstimate {
                value: noncentral_chi2_sf(crit, r, mu),
                std_error: 0.0,
            })
        }
        PowerMethod::MonteCarlo => {
            if mc_reps == 0 {
                return Err(Error::MethodMismatch("mc_reps must be positive".into()));
            }
            let a = &problem.psi * &problem.v * problem.psi.transpose();
            let b = &problem.psi * &problem.v_stud * problem.psi.transpose();
            let a_half = psd_sqrt(&a)?;
            let b_inv = linalg::invert(&b)?;
            let q = {
                let q = &a_half * b_inv * &a_half;
                0.5 * (&q + q.transpose())
            };
            let lambda = DVector::from_column_slice(&problem.lambda);
            let lambda_tilde = linalg::solve(&a_half, &lambda)?;

            const CHUNK: u64 = 1 << 14;
            let num_chunks = mc_reps.div_ceil(CHUNK);
            let exceed: u64 = (0..num_chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = seed.child(c).rng();
                    let draws = CHUNK.min(mc_reps - c * CHUNK);
                    let mut count = 0u64;
                    let mut xi = DVector::zeros(r);
                    for _ in 0..draws {
                        for i in 0..r {
                            let z: f64 = rand::Rng::sample(&mut rng, StandardNormal);
                            xi[i] = z + lambda_tilde[i];
                        }
                        let stat = xi.dot(&(&q * &xi));
                        if stat > crit {
                            count += 1;
                        }
                    }
                    count
                })
                .sum();
            let p = exceed as f64 / mc_reps as f64;
            Ok(PowerEstimate {
                value: p,
                std_error: (p * (1.0 - p) / mc_reps as f64).sqrt(),
            })
        }
    }
}
