//! Distributional checks on the assignment mechanisms: law-of-large-numbers
//! behavior for simple random sampling, exact uniformity over arrangements
//! for stratified blocks, and exchangeability of cell counts.

use std::collections::HashMap;

use carstat::randomize::{assign_sbr, assign_srs};
use carstat::rng::RngSeed;
use carstat::types::{count_cells, Dataset, Observation, StratumLabel, TargetProportions};

#[test]
fn srs_frequencies_converge_to_targets() {
    // One million draws at treated share 0.3: within 0.002.
    let n = 1_000_000usize;
    let pi = TargetProportions::two_arm(&[0.3]).unwrap();
    let strata = vec![StratumLabel(1); n];
    let asg = assign_srs(&strata, &pi, RngSeed::new(12, 0)).unwrap();
    let treated = asg.labels.iter().filter(|l| l.0 == 1).count();
    let frac = treated as f64 / n as f64;
    assert!((frac - 0.3).abs() < 0.002, "treated fraction {frac}");
}

#[test]
fn srs_per_stratum_frequencies() {
    // Stratum-varying targets at n = 100_000 per stratum, tolerance 0.01.
    let pi = TargetProportions::two_arm(&[0.2, 0.45, 0.7]).unwrap();
    let mut strata = Vec::new();
    for s in 1..=3 {
        strata.extend(std::iter::repeat(StratumLabel(s)).take(100_000));
    }
    let asg = assign_srs(&strata, &pi, RngSeed::new(15, 1)).unwrap();
    for (s, target) in [(1usize, 0.2f64), (2, 0.45), (3, 0.7)] {
        let (mut total, mut treated) = (0usize, 0usize);
        for (lab, st) in asg.labels.iter().zip(&strata) {
            if st.0 == s {
                total += 1;
                treated += (lab.0 == 1) as usize;
            }
        }
        let frac = treated as f64 / total as f64;
        assert!((frac - target).abs() < 0.01, "stratum {s}: {frac} vs {target}");
    }
}

#[test]
fn sbr_arrangements_uniform_by_enumeration() {
    // n(s) = 6, one treatment at 1/2: C(6,3) = 20 arrangements, each with
    // frequency 1/20 +- 0.01 over 10^4 seeded runs.
    let pi = TargetProportions::two_arm(&[0.5]).unwrap();
    let strata = vec![StratumLabel(1); 6];
    let mut freq: HashMap<u32, u32> = HashMap::new();
    let runs = 10_000u32;
    for seed in 0..runs {
        let asg = assign_sbr(&strata, &pi, RngSeed::new(seed as u64, 90)).unwrap();
        let mut key = 0u32;
        for (i, lab) in asg.labels.iter().enumerate() {
            key |= (lab.0 as u32) << i;
        }
        *freq.entry(key).or_default() += 1;
    }
    assert_eq!(freq.len(), 20, "every arrangement occurs");
    for (key, count) in &freq {
        assert_eq!(key.count_ones(), 3, "exactly three treated in every run");
        let f = *count as f64 / runs as f64;
        assert!((f - 0.05).abs() < 0.01, "arrangement {key:b}: frequency {f}");
    }
}

#[test]
fn sbr_counts_exact_for_every_seed_and_stratum() {
    let pi = TargetProportions::new(vec![
        vec![0.45, 0.55, 0.5],
        vec![0.25, 0.15, 0.3],
        vec![0.30, 0.30, 0.2],
    ])
    .unwrap();
    let mut strata = Vec::new();
    for (s, k) in [(1usize, 17usize), (2, 9), (3, 28)] {
        strata.extend(std::iter::repeat(StratumLabel(s)).take(k));
    }
    for seed in 0..50u64 {
        let asg = assign_sbr(&strata, &pi, RngSeed::new(seed, 4)).unwrap();
        let obs: Vec<Observation> = asg
            .labels
            .iter()
            .zip(&strata)
            .map(|(a, s)| Observation::new(0.0, a.0, s.0))
            .collect();
        let counts = count_cells(&Dataset::new(obs, 2, 3).unwrap());
        for (s0, n_s) in [(0usize, 17usize), (1, 9), (2, 28)] {
            for a in 1..=2usize {
                let expect = (n_s as f64 * pi.get(a, s0 + 1)).floor() as usize;
                assert_eq!(counts.n_as[a][s0], expect, "seed {seed} cell ({a},{})", s0 + 1);
            }
        }
    }
}

#[test]
fn sbr_strong_balance_bound() {
    // |n_a(s)/n(s) - pi_a(s)| < 1/n(s) deterministically, i.e. the
    // normalized imbalance vanishes at rate n(s), not sqrt(n(s)).
    let pi = TargetProportions::two_arm(&[0.3, 0.61]).unwrap();
    let mut strata = Vec::new();
    strata.extend(std::iter::repeat(StratumLabel(1)).take(731));
    strata.extend(std::iter::repeat(StratumLabel(2)).take(212));
    for seed in 0..20u64 {
        let asg = assign_sbr(&strata, &pi, RngSeed::new(seed, 8)).unwrap();
        for (s, n_s) in [(1usize, 731usize), (2, 212)] {
            let treated = asg
                .labels
                .iter()
                .zip(&strata)
                .filter(|(l, st)| st.0 == s && l.0 == 1)
                .count();
            let dev = (treated as f64 / n_s as f64 - pi.get(1, s)).abs();
            assert!(dev < 1.0 / n_s as f64, "stratum {s} imbalance {dev}");
        }
    }
}

#[test]
fn assignments_depend_on_strata_only_through_the_vector() {
    // Permuting units permutes the stratum vector; the induced cell counts
    // are identical because SBR counts are deterministic per stratum.
    let pi = TargetProportions::two_arm(&[0.4, 0.4]).unwrap();
    let strata: Vec<StratumLabel> = (0..40)
        .map(|i| StratumLabel(if i % 3 == 0 { 1 } else { 2 }))
        .collect();
    let mut permuted = strata.clone();
    permuted.reverse();
    for seed in 0..10u64 {
        let a1 = assign_sbr(&strata, &pi, RngSeed::new(seed, 2)).unwrap();
        let a2 = assign_sbr(&permuted, &pi, RngSeed::new(seed, 2)).unwrap();
        for s in 1..=2usize {
            let count = |labels: &[carstat::types::TreatmentLabel], strat: &[StratumLabel]| {
                labels
                    .iter()
                    .zip(strat)
                    .filter(|(l, st)| st.0 == s && l.0 == 1)
                    .count()
            };
            assert_eq!(count(&a1.labels, &strata), count(&a2.labels, &permuted));
        }
    }
}
