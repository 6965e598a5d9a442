//! Cross-validation of asymptotic local power against the finite-sample
//! rejection rates in the shipped reference tables.

use carstat::hypothesis::chi2_quantile;
use carstat::moments::{population_moments, ORACLE_SEED};
use carstat::montecarlo::{reference_table, CellKey, Side, TestEstimator, TestId, TestVariance};
use carstat::power::noncentral_chi2_sf;
use carstat::types::TargetProportions;
use carstat::variance::v_analytic_sat;
use carstat::dgp::{ModelSpec, Scheme};

#[test]
fn closed_form_power_matches_reference_rejection_rate() {
    // Model 2 under stratified blocks: the corrected saturated test's
    // rejection rate under the alternative should match the asymptotic
    // local power at lambda = sqrt(n) * theta within 5 percentage points.
    let reference = reference_table("t1").unwrap();
    let n = reference.params.n as f64;
    let pi = TargetProportions::constant(&[0.7, 0.3], 10).unwrap();
    let spec = ModelSpec::new(2, 1.0, 1.0, 1.0, 0.0, 0.0, 10, pi.clone(), 1).unwrap();
    let m = population_moments(&spec, 4_000_000, ORACLE_SEED);
    let v_sat = v_analytic_sat(&m, &pi).unwrap().at(1, 1);
    let lambda = n.sqrt() * 0.2;
    let mu = lambda * lambda / v_sat;
    let power = noncentral_chi2_sf(chi2_quantile(1, 0.95), 1, mu);
    let table_rate = reference.cells[&CellKey {
        model: 2,
        scheme: Scheme::Sbr,
        test: TestId {
            estimator: TestEstimator::Sat,
            variance: TestVariance::New,
        },
        side: Side::Alt,
    }];
    assert!(
        (power - table_rate).abs() < 0.05,
        "asymptotic power {power:.4} vs reference rate {table_rate:.4}"
    );
}
