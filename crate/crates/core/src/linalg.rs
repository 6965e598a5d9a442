//! Small dense linear-algebra helpers over nalgebra with explicit
//! singularity thresholds. Every system solved in this crate is tiny
//! (|A| to |S|+|A| on a side); clarity and pinned failure criteria matter
//! more than speed here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for declaring a matrix singular.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// Max-norm (largest absolute entry).
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Solve `a x = b` by pivoted LU, failing when any pivot falls below
/// `SINGULARITY_TOL` times the matrix max-norm.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // a NaN pivot must fail the gate
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = max_norm(a);
    let lu = a.clone().full_piv_lu();
    let min_pivot = (0..a.nrows().min(a.ncols()))
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > SINGULARITY_TOL * scale) {
        return Err(Error::SingularDesign(format!(
            "pivot {min_pivot:.3e} below threshold {:.3e}",
            SINGULARITY_TOL * scale
        )));
    }
    lu.solve(b)
        .ok_or_else(|| Error::SingularDesign("LU solve failed".into()))
}

/// Invert a small matrix under the same pivot threshold as [`solve`].
#[allow(clippy::neg_cmp_op_on_partial_ord)] // a NaN pivot must fail the gate
pub fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = max_norm(a);
    let lu = a.clone().full_piv_lu();
    let min_pivot = (0..a.nrows().min(a.ncols()))
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > SINGULARITY_TOL * scale) {
        return Err(Error::SingularDesign(format!(
            "pivot {min_pivot:.3e} below threshold {:.3e}",
            SINGULARITY_TOL * scale
        )));
    }
    lu.try_inverse()
        .ok_or_else(|| Error::SingularDesign("inverse failed".into()))
}

/// 2-norm condition number via singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_invert_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve(&a, &b).unwrap();
        let back = &a * &x;
        assert!((back - b).norm() < 1e-12);
        let inv = invert(&a).unwrap();
        assert!(((&a * inv) - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(solve(&a, &b).is_err());
    }
}
