//! Treatment assignment mechanisms: simple random sampling (Bernoulli
//! trials, possibly with stratum-specific probabilities) and stratified
//! block randomization (permuted blocks within strata).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::types::{StratumLabel, TargetProportions, TreatmentLabel};

/// Treatment assignments aligned with the stratum vector they were drawn
/// for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentVector {
    pub labels: Vec<TreatmentLabel>,
}

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_strata(strata: &[StratumLabel], pi: &TargetProportions) -> Result<()> {
    if strata.is_empty() {
        return Err(Error::InvalidDataset("empty stratum vector".into()));
    }
    let num_strata = pi.num_strata();
    for s in strata {
        if s.0 < 1 || s.0 > num_strata {
            return Err(Error::StratumOutOfRange {
                label: s.0,
                max: num_strata,
            });
        }
    }
    Ok(())
}

/// Simple random sampling: each unit independently draws arm `a` with
/// probability π_a(S_i).
pub fn assign_srs(
    strata: &[StratumLabel],
    pi: &TargetProportions,
    seed: RngSeed,
) -> Result<AssignmentVector> {
    check_strata(strata, pi)?;
    let num_arms = pi.num_treatments() + 1;
    let mut rng = seed.rng();
    let labels = strata
        .iter()
        .map(|&s| {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut arm = num_arms - 1;
            for a in 0..num_arms {
                cum += pi.get(a, s.0);
                if u < cum {
                    arm = a;
                    break;
                }
            }
            TreatmentLabel(arm)
        })
        .collect();
    Ok(AssignmentVector { labels })
}

/// Stratified block randomization: within each stratum s, exactly
/// ⌊n(s)·π_a(s)⌋ units receive arm a for every non-control arm, the
/// remainder receive control, and all arrangements of that block are
/// equally likely (Fisher–Yates with unbiased bounded sampling).
///
/// Strata use independent child streams of `seed`, so the assignment in one
/// stratum does not depend on how many other strata exist.
pub fn assign_sbr(
    strata: &[StratumLabel],
    pi: &TargetProportions,
    seed: RngSeed,
) -> Result<AssignmentVector> {
    check_strata(strata, pi)?;
    let num_strata = pi.num_strata();
    let num_arms = pi.num_treatments() + 1;

    // Unit positions per stratum, in order of appearance.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_strata];
    for (i, &s) in strata.iter().enumerate() {
        members[s.0 - 1].push(i);
    }

    let mut labels = vec![TreatmentLabel(0); strata.len()];
    for (s0, positions) in members.iter().enumerate() {
        let n_s = positions.len();
        if n_s == 0 {
            continue;
        }
        let mut block = Vec::with_capacity(n_s);
        let mut assigned = 0usize;
        for a in 1..num_arms {
            let n_a = (n_s as f64 * pi.get(a, s0 + 1)).floor() as usize;
            assigned += n_a;
            if assigned > n_s {
                return Err(Error::BlockOverflow { stratum: s0 + 1 });
            }
            block.extend(std::iter::repeat_n(TreatmentLabel(a), n_a));
        }
        // Control takes the remainder, n_0(s) = n(s) - Σ_a n_a(s).
        block.extend(std::iter::repeat_n(TreatmentLabel(0), n_s - assigned));
        debug_assert_eq!(block.len(), n_s);

        let mut rng = seed.child(s0 as u64).rng();
        // Fisher–Yates.
        for i in (1..n_s).rev() {
            let j = rng.gen_range(0..=i);
            block.swap(i, j);
        }
        for (&pos, &label) in positions.iter().zip(block.iter()) {
            labels[pos] = label;
        }
    }
    Ok(AssignmentVector { labels })
}
