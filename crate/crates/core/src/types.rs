//! Domain types shared by the estimation, inference, and simulation layers:
//! labels, datasets, per-cell counts, target assignment proportions, and
//! linear hypotheses.
//!
//! Treatments are dense integer codes `0..=num_treatments` with 0 the
//! control; strata are dense codes `1..=num_strata`. Mapping arbitrary
//! external labels onto these codes is the ingestion layer's job.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Treatment arm code; 0 is the control arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TreatmentLabel(pub usize);

/// Stratum code in `1..=num_strata`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StratumLabel(pub usize);

/// One experimental unit: outcome, assigned arm, stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub y: f64,
    pub a: TreatmentLabel,
    pub s: StratumLabel,
}

impl Observation {
    pub fn new(y: f64, a: usize, s: usize) -> Self {
        Observation {
            y,
            a: TreatmentLabel(a),
            s: StratumLabel(s),
        }
    }
}

/// An observed sample: ordered units plus the experiment's arm/stratum counts.
///
/// Construction enforces label ranges and non-emptiness so that downstream
/// code can index cell arrays safely. Outcome finiteness and non-empty cells
/// are *not* enforced here; they are estimation preconditions, reported by
/// [`validate_dataset`] and enforced by the estimators themselves.
#[derive(Debug, Clone)]
pub struct Dataset {
    observations: Vec<Observation>,
    num_treatments: usize,
    num_strata: usize,
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        num_treatments: usize,
        num_strata: usize,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if num_treatments < 1 {
            return Err(Error::InvalidDataset(
                "num_treatments must be at least 1".into(),
            ));
        }
        if num_strata < 1 {
            return Err(Error::InvalidDataset("num_strata must be at least 1".into()));
        }
        for obs in &observations {
            if obs.a.0 > num_treatments {
                return Err(Error::TreatmentOutOfRange {
                    label: obs.a.0,
                    max: num_treatments,
                });
            }
            if obs.s.0 < 1 || obs.s.0 > num_strata {
                return Err(Error::StratumOutOfRange {
                    label: obs.s.0,
                    max: num_strata,
                });
            }
        }
        Ok(Dataset {
            observations,
            num_treatments,
            num_strata,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of non-control arms |A|.
    pub fn num_treatments(&self) -> usize {
        self.num_treatments
    }

    pub fn num_strata(&self) -> usize {
        self.num_strata
    }
}

/// Per-cell sample sizes: `n_as[a][s-1]` units in arm `a` and stratum `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumCounts {
    /// Indexed `[arm][stratum-1]`, arm 0 is control.
    pub n_as: Vec<Vec<usize>>,
    /// Per-stratum totals, indexed `[stratum-1]`.
    pub n_s: Vec<usize>,
    /// Grand total.
    pub n: usize,
}

impl StratumCounts {
    pub fn num_treatments(&self) -> usize {
        self.n_as.len() - 1
    }

    pub fn num_strata(&self) -> usize {
        self.n_s.len()
    }

    /// Units in arm `a`, all strata.
    pub fn n_a(&self, a: usize) -> usize {
        self.n_as[a].iter().sum()
    }
}

/// Tabulate per-(arm, stratum) sample sizes.
///
/// Deterministic and permutation-invariant: only multiplicities matter.
pub fn count_cells(dataset: &Dataset) -> StratumCounts {
    let num_arms = dataset.num_treatments() + 1;
    let num_strata = dataset.num_strata();
    let mut n_as = vec![vec![0usize; num_strata]; num_arms];
    let mut n_s = vec![0usize; num_strata];
    for obs in dataset.observations() {
        n_as[obs.a.0][obs.s.0 - 1] += 1;
        n_s[obs.s.0 - 1] += 1;
    }
    StratumCounts {
        n_as,
        n_s,
        n: dataset.len(),
    }
}

/// A single estimation-precondition failure, pointing at the offending cell
/// or record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Cell (a, s) contains no units; cell means are undefined.
    EmptyCell { treatment: usize, stratum: usize },
    /// Outcome at `record` (0-based) is NaN or infinite.
    NonFiniteOutcome { record: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyCell { treatment, stratum } => {
                write!(f, "empty cell ({treatment},{stratum})")
            }
            Violation::NonFiniteOutcome { record } => {
                write!(f, "non-finite outcome at record {record}")
            }
        }
    }
}

/// Check the estimation preconditions: every (arm, stratum) cell non-empty
/// and every outcome finite. Returns all violations rather than failing on
/// the first, so ingestion can report everything at once.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (i, obs) in dataset.observations().iter().enumerate() {
        if !obs.y.is_finite() {
            violations.push(Violation::NonFiniteOutcome { record: i });
        }
    }
    let counts = count_cells(dataset);
    for a in 0..=dataset.num_treatments() {
        for s in 1..=dataset.num_strata() {
            if counts.n_as[a][s - 1] == 0 {
                violations.push(Violation::EmptyCell {
                    treatment: a,
                    stratum: s,
                });
            }
        }
    }
    violations
}

/// Target assignment proportions π_a(s), one simplex column per stratum.
///
/// Entries are required to lie strictly inside (0, 1) with a 1e-12 boundary
/// tolerance, and each stratum's column must sum to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProportions {
    /// Indexed `[arm][stratum-1]`, arm 0 is control.
    pi: Vec<Vec<f64>>,
}

pub const SIMPLEX_TOL: f64 = 1e-12;

impl TargetProportions {
    pub fn new(pi: Vec<Vec<f64>>) -> Result<Self> {
        if pi.len() < 2 {
            return Err(Error::InvalidProportions(
                "need a control row and at least one treatment row".into(),
            ));
        }
        let num_strata = pi[0].len();
        if num_strata == 0 {
            return Err(Error::InvalidProportions("need at least one stratum".into()));
        }
        if pi.iter().any(|row| row.len() != num_strata) {
            return Err(Error::InvalidProportions("ragged proportion rows".into()));
        }
        for s in 0..num_strata {
            let mut col_sum = 0.0;
            for (a, row) in pi.iter().enumerate() {
                let p = row[s];
                if !(p > SIMPLEX_TOL && p < 1.0 - SIMPLEX_TOL) {
                    return Err(Error::InvalidProportions(format!(
                        "pi[{a}][{s}] = {p} not strictly inside (0,1)"
                    )));
                }
                col_sum += p;
            }
            if (col_sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidProportions(format!(
                    "stratum {} column sums to {col_sum}, not 1",
                    s + 1
                )));
            }
        }
        Ok(TargetProportions { pi })
    }

    /// Constant-across-strata proportions from a single simplex column.
    pub fn constant(pi_col: &[f64], num_strata: usize) -> Result<Self> {
        let pi = pi_col
            .iter()
            .map(|&p| vec![p; num_strata])
            .collect::<Vec<_>>();
        TargetProportions::new(pi)
    }

    /// Two-arm (control + one treatment) proportions with per-stratum
    /// treated shares `pi1`.
    pub fn two_arm(pi1: &[f64]) -> Result<Self> {
        let control = pi1.iter().map(|&p| 1.0 - p).collect::<Vec<_>>();
        TargetProportions::new(vec![control, pi1.to_vec()])
    }

    pub fn num_treatments(&self) -> usize {
        self.pi.len() - 1
    }

    pub fn num_strata(&self) -> usize {
        self.pi[0].len()
    }

    /// π_a(s); `a` is the arm code, `s` the 1-based stratum.
    pub fn get(&self, a: usize, s: usize) -> f64 {
        self.pi[a][s - 1]
    }

    /// True when every arm's proportion is the same in all strata (within
    /// `tol`), the regime in which the fixed-effects estimator targets the
    /// ATE.
    pub fn is_constant_across_strata(&self, tol: f64) -> bool {
        self.pi.iter().all(|row| {
            let first = row[0];
            row.iter().all(|&p| (p - first).abs() <= tol)
        })
    }
}

/// A linear restriction Ψ θ = c tested at level α.
#[derive(Debug, Clone)]
pub struct LinearHypothesis {
    psi: DMatrix<f64>,
    c: Vec<f64>,
    alpha: f64,
}

impl LinearHypothesis {
    /// `psi` is r×|A| full rank (checked via SVD with relative threshold
    /// 1e-10), `c` length r, `alpha` in (0,1).
    pub fn new(psi: DMatrix<f64>, c: Vec<f64>, alpha: f64) -> Result<Self> {
        let r = psi.nrows();
        if r == 0 || psi.ncols() == 0 {
            return Err(Error::InvalidHypothesis("psi must be non-empty".into()));
        }
        if r > psi.ncols() {
            return Err(Error::InvalidHypothesis(format!(
                "psi has more rows ({r}) than columns ({})",
                psi.ncols()
            )));
        }
        if c.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected {r}",
                c.len()
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidHypothesis(format!(
                "alpha = {alpha} not in (0,1)"
            )));
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
        Ok(LinearHypothesis { psi, c, alpha })
    }

    /// The one-ATE hypothesis θ_a = c for a single treatment `a` (1-based)
    /// among `num_treatments` arms.
    pub fn single(a: usize, c: f64, num_treatments: usize, alpha: f64) -> Result<Self> {
        let mut psi = DMatrix::zeros(1, num_treatments);
        if a < 1 || a > num_treatments {
            return Err(Error::InvalidHypothesis(format!(
                "treatment index {a} out of 1..={num_treatments}"
            )));
        }
        psi[(0, a - 1)] = 1.0;
        LinearHypothesis::new(psi, vec![c], alpha)
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn restrictions(&self) -> usize {
        self.psi.nrows()
    }
}
