//! Variance estimators against the literal matrix sandwiches, plus scale
//! and location equivariance as property tests.

mod common;

use carstat::estimators::{ate_saturated, fit_saturated, fit_sfe};
use carstat::types::{Dataset, Observation};
use carstat::variance::*;
use common::{random_dataset, saturated_design, sfe_design};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn sat_sandwiches_match_literal_matrices() {
    for seed in 0..200u64 {
        let num_treat = 1 + (seed as usize % 3);
        let num_strata = 1 + (seed as usize % 4);
        let ds = random_dataset(seed + 50, 60 + (seed as usize % 140), num_treat, num_strata);
        let fit = fit_saturated(&ds).unwrap();
        let n = ds.len() as f64;

        let (x, r) = saturated_design(&ds);
        let gram = (x.transpose() * &x) / n;
        let gram_inv = gram.try_inverse().expect("full rank");
        let u2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            ds.len(),
            fit.residuals.iter().map(|&u| u * u),
        ));
        let meat = (x.transpose() * u2 * &x) / n;
        let literal_hc = &r * &gram_inv * meat * gram_inv.transpose() * r.transpose();
        let sigma2 = fit.residuals.iter().map(|&u| u * u).sum::<f64>() / n;
        let literal_ho = &r * &gram_inv * r.transpose() * sigma2;

        let hc = v_hc_saturated(&fit).unwrap();
        let ho = v_ho_saturated(&fit).unwrap();
        for a in 0..num_treat {
            for b in 0..num_treat {
                assert!(
                    rel_err(hc.matrix()[(a, b)], literal_hc[(a, b)]) < 1e-9,
                    "seed {seed} hc ({a},{b}): {} vs {}",
                    hc.matrix()[(a, b)],
                    literal_hc[(a, b)]
                );
                assert!(
                    rel_err(ho.matrix()[(a, b)], literal_ho[(a, b)]) < 1e-9,
                    "seed {seed} ho ({a},{b})"
                );
            }
        }
    }
}

#[test]
fn sfe_sandwiches_match_literal_matrices() {
    for seed in 0..200u64 {
        let num_treat = 1 + (seed as usize % 3);
        let num_strata = 1 + (seed as usize % 4);
        let ds = random_dataset(seed + 300, 60 + (seed as usize % 140), num_treat, num_strata);
        let fit = fit_sfe(&ds).unwrap();
        let n = ds.len() as f64;

        let (x, r) = sfe_design(&ds);
        let gram = (x.transpose() * &x) / n;
        let gram_inv = gram.try_inverse().expect("full rank");
        let u2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            ds.len(),
            fit.residuals.iter().map(|&u| u * u),
        ));
        let meat = (x.transpose() * u2 * &x) / n;
        let literal_hc = &r * &gram_inv * meat * gram_inv.transpose() * r.transpose();
        let sigma2 = fit.residuals.iter().map(|&u| u * u).sum::<f64>() / n;
        let literal_ho = &r * &gram_inv * r.transpose() * sigma2;

        let hc = v_hc_sfe(&fit).unwrap();
        let ho = v_ho_sfe(&fit).unwrap();
        for a in 0..num_treat {
            for b in 0..num_treat {
                assert!(
                    rel_err(hc.matrix()[(a, b)], literal_hc[(a, b)]) < 1e-8,
                    "seed {seed} sfe hc ({a},{b}): {} vs {}",
                    hc.matrix()[(a, b)],
                    literal_hc[(a, b)]
                );
                assert!(
                    rel_err(ho.matrix()[(a, b)], literal_ho[(a, b)]) < 1e-8,
                    "seed {seed} sfe ho ({a},{b})"
                );
            }
        }
    }
}

#[test]
fn every_estimate_symmetric_and_psd_on_corpus() {
    for seed in 0..60u64 {
        let ds = random_dataset(seed + 700, 120, 2, 3);
        let sat = fit_saturated(&ds).unwrap();
        let sfe = fit_sfe(&ds).unwrap();
        // Constructors run the symmetry and PSD validation internally;
        // reaching Ok is the assertion.
        let theta = ate_saturated(&sat);
        for v in [
            v_ho_saturated(&sat),
            v_hc_saturated(&sat),
            v_new_saturated(&sat),
            v_h_hat(&sat, &theta),
            v_ho_sfe(&sfe),
            v_hc_sfe(&sfe),
            v_new_sfe(&sfe, &sat),
        ] {
            let v = v.unwrap();
            let eigs = carstat::linalg::symmetric_eigenvalues(v.matrix());
            assert!(eigs[0] >= -1e-8 * v.matrix().trace().abs() - 1e-12);
        }
    }
}

fn transform_dataset(ds: &Dataset, scale: f64, shift: f64) -> Dataset {
    let rows: Vec<Observation> = ds
        .observations()
        .iter()
        .map(|o| Observation::new(scale * o.y + shift, o.a.0, o.s.0))
        .collect();
    Dataset::new(rows, ds.num_treatments(), ds.num_strata()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Multiplying outcomes by k multiplies every variance estimate by k²;
    // adding a constant leaves them unchanged.
    #[test]
    fn scale_and_location_equivariance(
        seed in 0u64..1000,
        k in prop::sample::select(vec![-2.5f64, -1.0, 0.5, 3.0]),
        c in -10.0f64..10.0,
    ) {
        let ds = random_dataset(seed, 90, 1, 3);
        let ds_t = transform_dataset(&ds, k, c);
        let sat = fit_saturated(&ds).unwrap();
        let sat_t = fit_saturated(&ds_t).unwrap();
        let sfe = fit_sfe(&ds).unwrap();
        let sfe_t = fit_sfe(&ds_t).unwrap();
        let pairs = [
            (v_ho_saturated(&sat).unwrap(), v_ho_saturated(&sat_t).unwrap()),
            (v_hc_saturated(&sat).unwrap(), v_hc_saturated(&sat_t).unwrap()),
            (v_new_saturated(&sat).unwrap(), v_new_saturated(&sat_t).unwrap()),
            (v_ho_sfe(&sfe).unwrap(), v_ho_sfe(&sfe_t).unwrap()),
            (v_hc_sfe(&sfe).unwrap(), v_hc_sfe(&sfe_t).unwrap()),
            (v_new_sfe(&sfe, &sat).unwrap(), v_new_sfe(&sfe_t, &sat_t).unwrap()),
        ];
        for (orig, trans) in pairs {
            let expect = orig.at(1, 1) * k * k;
            prop_assert!(
                (trans.at(1, 1) - expect).abs() <= 1e-10 * expect.abs().max(1.0),
                "{}: {} vs {}", orig.kind(), trans.at(1, 1), expect
            );
        }
    }
}

#[test]
fn corrected_and_hc_agree_without_heterogeneity() {
    // Model 1 has identical conditional means across arms, so the
    // heterogeneity term vanishes asymptotically and the corrected
    // estimator tracks the plain sandwich.
    use carstat::dgp::{simulate_dataset, ModelSpec, Scheme};
    use carstat::types::TargetProportions;
    let pi = TargetProportions::constant(&[0.7, 0.3], 10).unwrap();
    let spec = ModelSpec::new(1, 1.0, 1.0, 1.0, 0.0, 0.0, 10, pi, 100_000).unwrap();
    let ds = simulate_dataset(&spec, Scheme::Sbr, None, carstat::rng::RngSeed::new(44, 0))
        .unwrap();
    let sat = fit_saturated(&ds).unwrap();
    let hc = v_hc_saturated(&sat).unwrap().at(1, 1);
    let new = v_new_saturated(&sat).unwrap().at(1, 1);
    assert!((new - hc).abs() / hc <= 0.05, "new {new} vs hc {hc}");
}

#[test]
fn new_sfe_reduces_to_theorem_form_under_strong_balance() {
    // tau = 0 adds a zero matrix: bitwise identical to the plain estimator.
    let ds = random_dataset(31, 160, 2, 4);
    let sat = fit_saturated(&ds).unwrap();
    let sfe = fit_sfe(&ds).unwrap();
    let plain = v_new_sfe(&sfe, &sat).unwrap();
    let tau0 = v_new_sfe_with_balance(&sfe, &sat, &BalanceProfile::constant(0.0, 4).unwrap())
        .unwrap();
    assert_eq!(plain.matrix(), tau0.matrix());
    // Positive tau adds a PSD term.
    let tau1 = v_new_sfe_with_balance(&sfe, &sat, &BalanceProfile::constant(1.0, 4).unwrap())
        .unwrap();
    let eigs = carstat::linalg::symmetric_eigenvalues(&(tau1.matrix() - plain.matrix()));
    assert!(eigs[0] >= -1e-12);
}
