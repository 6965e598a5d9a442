//! Shared helpers for the integration suites: seeded random datasets with
//! guaranteed-occupied cells, and dense least-squares oracles that solve
//! the two regressions the slow generic way.

use carstat::rng::RngSeed;
use carstat::types::{Dataset, Observation};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A random dataset with every (arm, stratum) cell occupied.
pub fn random_dataset(seed: u64, n: usize, num_treat: usize, num_strata: usize) -> Dataset {
    let mut rng = RngSeed::new(seed, 900).rng();
    let mut rows = Vec::with_capacity(n);
    for a in 0..=num_treat {
        for s in 1..=num_strata {
            rows.push(Observation::new(cell_outcome(&mut rng, a, s), a, s));
        }
    }
    while rows.len() < n {
        let a = rng.gen_range(0..=num_treat);
        let s = rng.gen_range(1..=num_strata);
        rows.push(Observation::new(cell_outcome(&mut rng, a, s), a, s));
    }
    Dataset::new(rows, num_treat, num_strata).unwrap()
}

fn cell_outcome<R: Rng>(rng: &mut R, a: usize, s: usize) -> f64 {
    // Heterogeneous cell means and scales so no structure collapses.
    let base = 0.8 * a as f64 + 0.3 * (s as f64) * (a as f64) - 0.5 * s as f64;
    base + (rng.gen::<f64>() - 0.5) * (1.0 + 0.4 * s as f64)
}

/// Generic OLS through the normal equations X'X b = X'y with a full-pivot
/// LU solve; returns coefficients.
pub fn dense_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    gram.full_piv_lu().solve(&rhs).expect("normal equations solve")
}

/// Dense solve of the saturated regression. Returns (delta, beta) with
/// beta indexed `[a-1][s-1]`.
pub fn saturated_by_dense_ols(dataset: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = dataset.len();
    let num_treat = dataset.num_treatments();
    let num_strata = dataset.num_strata();
    let p = num_strata + num_treat * num_strata;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, obs) in dataset.observations().iter().enumerate() {
        y[i] = obs.y;
        x[(i, obs.s.0 - 1)] = 1.0;
        if obs.a.0 > 0 {
            x[(i, num_strata + (obs.s.0 - 1) * num_treat + obs.a.0 - 1)] = 1.0;
        }
    }
    let coef = dense_ols(&x, &y);
    let delta = (0..num_strata).map(|s0| coef[s0]).collect();
    let beta = (0..num_treat)
        .map(|a0| {
            (0..num_strata)
                .map(|s0| coef[num_strata + s0 * num_treat + a0])
                .collect()
        })
        .collect();
    (delta, beta)
}

/// Dense solve of the fixed-effects regression. Returns (delta_star,
/// beta_star).
pub fn sfe_by_dense_ols(dataset: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let n = dataset.len();
    let num_treat = dataset.num_treatments();
    let num_strata = dataset.num_strata();
    let p = num_strata + num_treat;
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, obs) in dataset.observations().iter().enumerate() {
        y[i] = obs.y;
        x[(i, obs.s.0 - 1)] = 1.0;
        if obs.a.0 > 0 {
            x[(i, num_strata + obs.a.0 - 1)] = 1.0;
        }
    }
    let coef = dense_ols(&x, &y);
    (
        (0..num_strata).map(|s0| coef[s0]).collect(),
        (0..num_treat).map(|a0| coef[num_strata + a0]).collect(),
    )
}

/// The saturated design matrix and the ATE read-out matrix R used by the
/// literal sandwich formulas.
pub fn saturated_design(dataset: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = dataset.len();
    let num_treat = dataset.num_treatments();
    let num_strata = dataset.num_strata();
    let p = num_strata + num_treat * num_strata;
    let mut x = DMatrix::zeros(n, p);
    for (i, obs) in dataset.observations().iter().enumerate() {
        x[(i, obs.s.0 - 1)] = 1.0;
        if obs.a.0 > 0 {
            x[(i, num_strata + (obs.s.0 - 1) * num_treat + obs.a.0 - 1)] = 1.0;
        }
    }
    let counts = carstat::types::count_cells(dataset);
    let mut r = DMatrix::zeros(num_treat, p);
    for s0 in 0..num_strata {
        let w = counts.n_s[s0] as f64 / n as f64;
        for a0 in 0..num_treat {
            r[(a0, num_strata + s0 * num_treat + a0)] = w;
        }
    }
    (x, r)
}

/// The fixed-effects design matrix and its read-out matrix R* = [0, I].
pub fn sfe_design(dataset: &Dataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = dataset.len();
    let num_treat = dataset.num_treatments();
    let num_strata = dataset.num_strata();
    let p = num_strata + num_treat;
    let mut x = DMatrix::zeros(n, p);
    for (i, obs) in dataset.observations().iter().enumerate() {
        x[(i, obs.s.0 - 1)] = 1.0;
        if obs.a.0 > 0 {
            x[(i, num_strata + obs.a.0 - 1)] = 1.0;
        }
    }
    let mut r = DMatrix::zeros(num_treat, p);
    for a0 in 0..num_treat {
        r[(a0, num_strata + a0)] = 1.0;
    }
    (x, r)
}
