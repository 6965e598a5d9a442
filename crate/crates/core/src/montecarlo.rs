//! Rejection-rate simulation engine: sweep (model, scheme, estimator,
//! variance) grids under the null and a fixed alternative, aggregate
//! rejection frequencies, and compare against shipped reference tables.
//!
//! Replications are embarrassingly parallel; every replication derives its
//! stream from (master seed, side, index) alone and aggregation is integer
//! counting, so results are bit-identical for any thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dgp::{simulate_dataset, MeanCache, ModelSpec, Scheme};
use crate::error::{Error, Result};
use crate::estimators::{ate_saturated, fit_saturated, fit_sfe};
use crate::hypothesis::{chi2_quantile, two_sample_ttest, TTestVariance};
use crate::moments::{compute_mean_cache, ORACLE_SEED};
use crate::rng::RngSeed;
use crate::types::{validate_dataset, TargetProportions, TreatmentLabel};
use crate::variance::{
    v_hc_saturated, v_hc_sfe, v_ho_saturated, v_ho_sfe, v_new_saturated, v_new_sfe_with_balance,
    BalanceProfile,
};

/// Which side of the testing problem a replication was generated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Null,
    Alt,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Null => write!(f, "h0"),
            Side::Alt => write!(f, "h1"),
        }
    }
}

/// Estimator column of the rejection grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestEstimator {
    Sat,
    Sfe,
    TTest,
}

/// Variance flavor within an estimator column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestVariance {
    Ho,
    Hc,
    New,
    Pooled,
    Robust,
}

/// One test in the grid: estimator × variance flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestId {
    pub estimator: TestEstimator,
    pub variance: TestVariance,
}

impl TestId {
    pub fn new(estimator: TestEstimator, variance: TestVariance) -> Result<Self> {
        let ok = match estimator {
            TestEstimator::Sat | TestEstimator::Sfe => matches!(
                variance,
                TestVariance::Ho | TestVariance::Hc | TestVariance::New
            ),
            TestEstimator::TTest => {
                matches!(variance, TestVariance::Pooled | TestVariance::Robust)
            }
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "variance flavor {variance:?} does not apply to estimator {estimator:?}"
            )));
        }
        Ok(TestId {
            estimator,
            variance,
        })
    }

    /// The six regression-based tests in table order.
    pub fn standard_grid() -> Vec<TestId> {
        use TestEstimator::*;
        use TestVariance::*;
        [(Sat, Ho), (Sat, Hc), (Sat, New), (Sfe, Ho), (Sfe, Hc), (Sfe, New)]
            .into_iter()
            .map(|(e, v)| TestId {
                estimator: e,
                variance: v,
            })
            .collect()
    }
}

impl std::fmt::Display for TestEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestEstimator::Sat => write!(f, "sat"),
            TestEstimator::Sfe => write!(f, "sfe"),
            TestEstimator::TTest => write!(f, "ttest"),
        }
    }
}

impl std::fmt::Display for TestVariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestVariance::Ho => write!(f, "ho"),
            TestVariance::Hc => write!(f, "hc"),
            TestVariance::New => write!(f, "new"),
            TestVariance::Pooled => write!(f, "pooled"),
            TestVariance::Robust => write!(f, "robust"),
        }
    }
}

macro_rules! parse_enum {
    ($ty:ty { $($txt:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($txt => Ok($v),)+
                    other => Err(Error::Parse {
                        line: 0,
                        message: format!("unknown token '{other}' for {}", stringify!($ty)),
                    }),
                }
            }
        }
    };
}

parse_enum!(Side { "h0" => Side::Null, "h1" => Side::Alt });
parse_enum!(Scheme { "srs" => Scheme::Srs, "sbr" => Scheme::Sbr });
parse_enum!(TestEstimator {
    "sat" => TestEstimator::Sat,
    "sfe" => TestEstimator::Sfe,
    "ttest" => TestEstimator::TTest
});
parse_enum!(TestVariance {
    "ho" => TestVariance::Ho,
    "hc" => TestVariance::Hc,
    "new" => TestVariance::New,
    "pooled" => TestVariance::Pooled,
    "robust" => TestVariance::Robust
});

/// Address of one rejection rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub model: u8,
    pub scheme: Scheme,
    pub test: TestId,
    pub side: Side,
}

/// Treated-share specification for a table: one constant or one share per
/// stratum.
#[derive(Debug, Clone, PartialEq)]
pub enum PiSpec {
    Constant(f64),
    Varying(Vec<f64>),
}

impl PiSpec {
    pub fn proportions(&self, num_strata: usize) -> Result<TargetProportions> {
        match self {
            PiSpec::Constant(p) => TargetProportions::two_arm(&vec![*p; num_strata]),
            PiSpec::Varying(ps) => {
                if ps.len() != num_strata {
                    return Err(Error::InvalidConfig(format!(
                        "pi grid has {} entries for {num_strata} strata",
                        ps.len()
                    )));
                }
                TargetProportions::two_arm(ps)
            }
        }
    }
}

/// Shared parameters of a rejection table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableParams {
    pub table_id: String,
    pub n: usize,
    pub num_strata: usize,
    pub gamma: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub pi: PiSpec,
    pub alpha: f64,
    pub reps: u64,
}

/// Rejection rates over a cell grid, with Monte Carlo metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionTable {
    pub params: TableParams,
    /// Rates as fractions in [0, 1].
    pub cells: BTreeMap<CellKey, f64>,
    /// Replications that needed a redraw because of an empty cell.
    pub retries: u64,
    /// Cells a reference file marks as not suitable for strict regression.
    pub excluded: BTreeSet<CellKey>,
}

impl RejectionTable {
    /// Binomial Monte Carlo standard error of one cell's rate.
    pub fn mc_std_error(&self, key: &CellKey) -> Option<f64> {
        self.cells
            .get(key)
            .map(|&r| (r * (1.0 - r) / self.params.reps as f64).sqrt())
    }

    /// Keep only cells satisfying the predicate.
    pub fn filtered<F: Fn(&CellKey) -> bool>(&self, keep: F) -> RejectionTable {
        RejectionTable {
            params: self.params.clone(),
            cells: self
                .cells
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (*k, *v))
                .collect(),
            retries: self.retries,
            excluded: self.excluded.iter().filter(|k| keep(k)).copied().collect(),
        }
    }

    /// Merge studies that share parameters into one table.
    pub fn merge(mut tables: Vec<RejectionTable>, table_id: &str) -> Result<RejectionTable> {
        let mut base = tables
            .pop()
            .ok_or_else(|| Error::InvalidConfig("nothing to merge".into()))?;
        for t in tables {
            for (k, v) in t.cells {
                if base.cells.insert(k, v).is_some() {
                    return Err(Error::GridMismatch(format!("duplicate cell {k:?}")));
                }
            }
            base.retries += t.retries;
            base.excluded.extend(t.excluded);
        }
        base.params.table_id = table_id.to_string();
        Ok(base)
    }
}

/// Configuration of one simulation study: a single (model, scheme) pair
/// swept over the test grid under the null and the alternative.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub spec: ModelSpec,
    pub scheme: Scheme,
    pub reps: u64,
    pub master_seed: RngSeed,
    pub alpha: f64,
    /// (μ0, μ1) under the null.
    pub mu_null: (f64, f64),
    /// (μ0, μ1) under the alternative.
    pub mu_alt: (f64, f64),
    pub grid: Vec<TestId>,
    /// Draw budget for the re-centering mean cache (fixed oracle stream).
    pub mean_budget: u64,
}

impl SimConfig {
    pub fn new(spec: ModelSpec, scheme: Scheme, reps: u64, master_seed: RngSeed) -> Self {
        SimConfig {
            spec,
            scheme,
            reps,
            master_seed,
            alpha: 0.05,
            mu_null: (0.0, 0.0),
            mu_alt: (0.0, 0.2),
            grid: TestId::standard_grid(),
            mean_budget: crate::moments::DEFAULT_BUDGET,
        }
    }
}

const MAX_RETRIES: u32 = 100;

struct RepOutcome {
    rejects: Vec<bool>,
    retries: u32,
}

#[allow(clippy::too_many_arguments)]
fn run_one_rep(
    spec: &ModelSpec,
    scheme: Scheme,
    cache: Option<&MeanCache>,
    grid: &[TestId],
    balance: &BalanceProfile,
    crit: f64,
    alpha: f64,
    rep_seed: RngSeed,
    rep_index: u64,
) -> Result<RepOutcome> {
    let mut retries = 0u32;
    let dataset = loop {
        let ds = simulate_dataset(spec, scheme, cache, rep_seed.child(retries as u64))?;
        if validate_dataset(&ds).is_empty() {
            break ds;
        }
        retries += 1;
        if retries > MAX_RETRIES {
            return Err(Error::RetriesExhausted {
                replication: rep_index,
                retries: MAX_RETRIES,
            });
        }
    };

    let needs_sat = grid.iter().any(|t| t.estimator == TestEstimator::Sat)
        || grid
            .iter()
            .any(|t| t.estimator == TestEstimator::Sfe && t.variance == TestVariance::New);
    let needs_sfe = grid.iter().any(|t| t.estimator == TestEstimator::Sfe);

    let sat = if needs_sat {
        Some(fit_saturated(&dataset)?)
    } else {
        None
    };
    let sfe = if needs_sfe {
        Some(fit_sfe(&dataset)?)
    } else {
        None
    };

    let n = dataset.len() as f64;
    let mut rejects = Vec::with_capacity(grid.len());
    for t in grid {
        let reject = match t.estimator {
            TestEstimator::Sat => {
                let fit = sat.as_ref().expect("fit prepared above");
                let theta = ate_saturated(fit).theta[0];
                let v = match t.variance {
                    TestVariance::Ho => v_ho_saturated(fit)?,
                    TestVariance::Hc => v_hc_saturated(fit)?,
                    TestVariance::New => v_new_saturated(fit)?,
                    _ => unreachable!("grid validated at construction"),
                };
                n * theta * theta / v.at(1, 1) > crit
            }
            TestEstimator::Sfe => {
                let fit = sfe.as_ref().expect("fit prepared above");
                let theta = fit.beta_star[0];
                let v = match t.variance {
                    TestVariance::Ho => v_ho_sfe(fit)?,
                    TestVariance::Hc => v_hc_sfe(fit)?,
                    TestVariance::New => {
                        v_new_sfe_with_balance(fit, sat.as_ref().expect("sat fit"), balance)?
                    }
                    _ => unreachable!("grid validated at construction"),
                };
                n * theta * theta / v.at(1, 1) > crit
            }
            TestEstimator::TTest => {
                let flavor = match t.variance {
                    TestVariance::Pooled => TTestVariance::Pooled,
                    _ => TTestVariance::Robust,
                };
                let rep = two_sample_ttest(&dataset, TreatmentLabel(1), flavor)?;
                rep.p_value < alpha
            }
        };
        rejects.push(reject);
    }
    Ok(RepOutcome { rejects, retries })
}

/// Run one study. The Wald tests use Ψ = (1), c = 0 at the configured
/// level; both sides are simulated from independent substreams of the
/// master seed.
pub fn run_study(config: &SimConfig) -> Result<RejectionTable> {
    if config.reps < 1 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    for t in &config.grid {
        TestId::new(t.estimator, t.variance)?;
    }
    let crit = chi2_quantile(1, 1.0 - config.alpha);
    // The fixed-effects "new" test studentizes with the assignment-noise
    // term scaled by the scheme's balance parameter: simple random
    // sampling has tau = 1, stratified blocks achieve strong balance.
    let balance = BalanceProfile::constant(
        match config.scheme {
            Scheme::Srs => 1.0,
            Scheme::Sbr => 0.0,
        },
        config.spec.num_strata,
    )?;

    let cache = if config.spec.model_id == 1 {
        None
    } else {
        Some(compute_mean_cache(
            &config.spec,
            config.mean_budget,
            ORACLE_SEED,
        ))
    };

    let mut cells = BTreeMap::new();
    let mut total_retries = 0u64;
    for (side, mu) in [(Side::Null, config.mu_null), (Side::Alt, config.mu_alt)] {
        let spec = ModelSpec::new(
            config.spec.model_id,
            config.spec.gamma,
            config.spec.sigma0,
            config.spec.sigma1,
            mu.0,
            mu.1,
            config.spec.num_strata,
            config.spec.pi.clone(),
            config.spec.n,
        )?;
        let side_seed = config.master_seed.child(match side {
            Side::Null => 0,
            Side::Alt => 1,
        });
        let outcomes: Result<Vec<RepOutcome>> = (0..config.reps)
            .into_par_iter()
            .map(|k| {
                run_one_rep(
                    &spec,
                    config.scheme,
                    cache.as_ref(),
                    &config.grid,
                    &balance,
                    crit,
                    config.alpha,
                    side_seed.child(k),
                    k,
                )
            })
            .collect();
        let outcomes = outcomes?;
        let mut counts = vec![0u64; config.grid.len()];
        for o in &outcomes {
            total_retries += o.retries as u64;
            for (c, &r) in counts.iter_mut().zip(&o.rejects) {
                *c += r as u64;
            }
        }
        for (t, &c) in config.grid.iter().zip(&counts) {
            cells.insert(
                CellKey {
                    model: config.spec.model_id,
                    scheme: config.scheme,
                    test: *t,
                    side,
                },
                c as f64 / config.reps as f64,
            );
        }
    }

    let pi1: Vec<f64> = (1..=config.spec.num_strata)
        .map(|s| config.spec.pi.get(1, s))
        .collect();
    let pi = if pi1.iter().all(|&p| (p - pi1[0]).abs() < 1e-12) {
        PiSpec::Constant(pi1[0])
    } else {
        PiSpec::Varying(pi1)
    };
    Ok(RejectionTable {
        params: TableParams {
            table_id: String::new(),
            n: config.spec.n,
            num_strata: config.spec.num_strata,
            gamma: config.spec.gamma,
            sigma0: config.spec.sigma0,
            sigma1: config.spec.sigma1,
            pi,
            alpha: config.alpha,
            reps: config.reps,
        },
        cells,
        retries: total_retries,
        excluded: BTreeSet::new(),
    })
}

/// One compared cell.
#[derive(Debug, Clone)]
pub struct CompareCell {
    pub key: CellKey,
    pub ours: f64,
    pub reference: f64,
    pub diff_pp: f64,
    pub pass: bool,
}

/// Result of comparing a computed table against a reference.
#[derive(Debug, Clone)]
pub struct CompareReport {
    pub tol_pp: f64,
    pub cells: Vec<CompareCell>,
}

impl CompareReport {
    pub fn pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CompareCell> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

/// Per-cell absolute difference in percentage points; errors if the two
/// tables do not cover the same grid.
pub fn compare_to_reference(
    table: &RejectionTable,
    reference: &RejectionTable,
    tol_pp: f64,
) -> Result<CompareReport> {
    let ours: BTreeSet<_> = table.cells.keys().copied().collect();
    let theirs: BTreeSet<_> = reference.cells.keys().copied().collect();
    if ours != theirs {
        let missing: Vec<_> = theirs.difference(&ours).take(3).collect();
        let extra: Vec<_> = ours.difference(&theirs).take(3).collect();
        return Err(Error::GridMismatch(format!(
            "missing {missing:?}, extra {extra:?}"
        )));
    }
    let cells = table
        .cells
        .iter()
        .map(|(k, &v)| {
            let r = reference.cells[k];
            let diff_pp = (v - r).abs() * 100.0;
            CompareCell {
                key: *k,
                ours: v,
                reference: r,
                diff_pp,
                pass: diff_pp <= tol_pp,
            }
        })
        .collect();
    Ok(CompareReport { tol_pp, cells })
}

// ---------------------------------------------------------------------------
// Table file format (shared by reference data and simulation output).
// ---------------------------------------------------------------------------

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a rejection table in the self-describing CSV layout. Rates are
/// written in percent at full precision.
pub fn write_table<W: Write>(w: &mut W, table: &RejectionTable) -> std::io::Result<()> {
    let p = &table.params;
    writeln!(w, "# rejection-rate table")?;
    writeln!(w, "format,carstat-table,1")?;
    writeln!(w, "table_id,{}", p.table_id)?;
    writeln!(w, "n,{}", p.n)?;
    writeln!(w, "num_strata,{}", p.num_strata)?;
    writeln!(w, "gamma,{}", fmt17(p.gamma))?;
    writeln!(w, "sigma0,{}", fmt17(p.sigma0))?;
    writeln!(w, "sigma1,{}", fmt17(p.sigma1))?;
    writeln!(w, "alpha,{}", fmt17(p.alpha))?;
    writeln!(w, "reps,{}", p.reps)?;
    match &p.pi {
        PiSpec::Constant(v) => writeln!(w, "pi,{}", fmt17(*v))?,
        PiSpec::Varying(vs) => writeln!(
            w,
            "pi_s,{}",
            vs.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(",")
        )?,
    }
    writeln!(w, "retries,{}", table.retries)?;
    for k in &table.excluded {
        writeln!(
            w,
            "exclude,{},{},{},{},{}",
            k.model, k.scheme, k.test.estimator, k.test.variance, k.side
        )?;
    }
    writeln!(w, "cells,model,scheme,estimator,variance,side,rate_percent")?;
    for (k, v) in &table.cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            k.model,
            k.scheme,
            k.test.estimator,
            k.test.variance,
            k.side,
            fmt17(v * 100.0)
        )?;
    }
    Ok(())
}

fn parse_key(fields: &[&str], line: usize) -> Result<CellKey> {
    if fields.len() < 5 {
        return Err(Error::Parse {
            line,
            message: "cell rows need model,scheme,estimator,variance,side".into(),
        });
    }
    let model: u8 = fields[0].parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad model id '{}'", fields[0]),
    })?;
    let test = TestId::new(fields[2].parse()?, fields[3].parse()?)?;
    Ok(CellKey {
        model,
        scheme: fields[1].parse()?,
        test,
        side: fields[4].parse()?,
    })
}

/// Read a rejection table written by [`write_table`] (or a hand-authored
/// reference file in the same layout; reference files typically carry
/// 2-decimal percents).
pub fn read_table<R: BufRead>(r: R) -> Result<RejectionTable> {
    let mut table_id = String::new();
    let mut n = 0usize;
    let mut num_strata = 0usize;
    let mut gamma = f64::NAN;
    let mut sigma0 = f64::NAN;
    let mut sigma1 = f64::NAN;
    let mut alpha = 0.05;
    let mut reps = 0u64;
    let mut retries = 0u64;
    let mut pi: Option<PiSpec> = None;
    let mut cells = BTreeMap::new();
    let mut excluded = BTreeSet::new();
    let mut in_cells = false;
    let mut saw_format = false;

    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if in_cells {
            let key = parse_key(&fields, lineno)?;
            let rate: f64 = fields
                .get(5)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "bad rate".into(),
                })?;
            if cells.insert(key, rate / 100.0).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "duplicate cell".into(),
                });
            }
            continue;
        }
        match fields[0] {
            "format" => {
                if fields.get(1) != Some(&"carstat-table") {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "not a carstat table file".into(),
                    });
                }
                saw_format = true;
            }
            "table_id" => table_id = fields.get(1).unwrap_or(&"").to_string(),
            "n" => {
                n = fields
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "bad n".into(),
                    })?
            }
            "num_strata" => {
                num_strata = fields
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "bad num_strata".into(),
                    })?
            }
            "gamma" => gamma = parse_f(&fields, 1, lineno)?,
            "sigma0" => sigma0 = parse_f(&fields, 1, lineno)?,
            "sigma1" => sigma1 = parse_f(&fields, 1, lineno)?,
            "alpha" => alpha = parse_f(&fields, 1, lineno)?,
            "reps" => {
                reps = fields
                    .get(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: "bad reps".into(),
                    })?
            }
            "retries" => retries = fields.get(1).and_then(|v| v.parse().ok()).unwrap_or(0),
            "pi" => pi = Some(PiSpec::Constant(parse_f(&fields, 1, lineno)?)),
            "pi_s" => {
                let vs = fields[1..]
                    .iter()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad pi grid: {e}"),
                    })?;
                pi = Some(PiSpec::Varying(vs));
            }
            "exclude" => {
                excluded.insert(parse_key(&fields[1..], lineno)?);
            }
            "cells" => in_cells = true,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown header field '{other}'"),
                })
            }
        }
    }
    if !saw_format {
        return Err(Error::Parse {
            line: 0,
            message: "missing format line".into(),
        });
    }
    let pi = pi.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing pi".into(),
    })?;
    Ok(RejectionTable {
        params: TableParams {
            table_id,
            n,
            num_strata,
            gamma,
            sigma0,
            sigma1,
            pi,
            alpha,
            reps,
        },
        cells,
        retries,
        excluded,
    })
}

fn parse_f(fields: &[&str], i: usize, line: usize) -> Result<f64> {
    fields
        .get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse {
            line,
            message: "bad number".into(),
        })
}

// ---------------------------------------------------------------------------
// Shipped reference tables.
// ---------------------------------------------------------------------------

/// Identifiers of the shipped reference tables.
pub const TABLE_IDS: [&str; 5] = ["t1", "t2", "t3", "t4", "t5"];

/// Load a shipped reference table by id.
pub fn reference_table(id: &str) -> Result<RejectionTable> {
    let text = match id {
        "t1" => include_str!("../data/reference/t1.csv"),
        "t2" => include_str!("../data/reference/t2.csv"),
        "t3" => include_str!("../data/reference/t3.csv"),
        "t4" => include_str!("../data/reference/t4.csv"),
        "t5" => include_str!("../data/reference/t5.csv"),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown table id '{other}' (expected one of {TABLE_IDS:?})"
            )))
        }
    };
    read_table(std::io::BufReader::new(text.as_bytes()))
}

/// Build the study configs reproducing one reference table: models 1–4
/// crossed with both schemes at the table's parameters.
pub fn table_configs(
    reference: &RejectionTable,
    reps: u64,
    master_seed: RngSeed,
    n_override: Option<usize>,
) -> Result<Vec<SimConfig>> {
    let p = &reference.params;
    let n = n_override.unwrap_or(p.n);
    let pi = p.pi.proportions(p.num_strata)?;
    let mut configs = Vec::new();
    for model in 1..=4u8 {
        for scheme in [Scheme::Srs, Scheme::Sbr] {
            let spec = ModelSpec::new(
                model,
                p.gamma,
                p.sigma0,
                p.sigma1,
                0.0,
                0.0,
                p.num_strata,
                pi.clone(),
                n,
            )?;
            let mut config = SimConfig::new(
                spec,
                scheme,
                reps,
                master_seed.child(model as u64 * 10 + scheme as u64),
            );
            config.alpha = p.alpha;
            configs.push(config);
        }
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(reps: u64, seed: u64) -> SimConfig {
        let pi = TargetProportions::constant(&[0.7, 0.3], 4).unwrap();
        let spec = ModelSpec::new(1, 1.0, 1.0, 1.0, 0.0, 0.0, 4, pi, 80).unwrap();
        SimConfig::new(spec, Scheme::Sbr, reps, RngSeed::new(seed, 0))
    }

    #[test]
    fn single_rep_reproducible() {
        let config = tiny_config(1, 5);
        let a = run_study(&config).unwrap();
        let b = run_study(&config).unwrap();
        assert_eq!(a.cells, b.cells);
        for &v in a.cells.values() {
            assert!(v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn compare_table_to_itself() {
        let table = run_study(&tiny_config(20, 9)).unwrap();
        let report = compare_to_reference(&table, &table, 0.0).unwrap();
        assert!(report.pass());
    }

    #[test]
    fn compare_rejects_grid_mismatch() {
        let table = run_study(&tiny_config(5, 2)).unwrap();
        let smaller = table.filtered(|k| k.side == Side::Null);
        assert!(matches!(
            compare_to_reference(&smaller, &table, 1.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn table_roundtrip_through_csv() {
        let mut table = run_study(&tiny_config(10, 3)).unwrap();
        table.params.table_id = "unit".into();
        let mut buf = Vec::new();
        write_table(&mut buf, &table).unwrap();
        let back = read_table(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back, table);
        // Writing again yields identical bytes.
        let mut buf2 = Vec::new();
        write_table(&mut buf2, &back).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn reference_tables_parse() {
        for id in TABLE_IDS {
            let t = reference_table(id).unwrap();
            assert_eq!(t.params.table_id, id);
            assert_eq!(t.cells.len(), 96, "{id}: 8 rows x 6 tests x 2 sides");
            assert!(t.cells.values().all(|&r| (0.0..=1.0).contains(&r)));
        }
        // The varying-proportion table carries the stratum grid.
        let t5 = reference_table("t5").unwrap();
        match &t5.params.pi {
            PiSpec::Varying(vs) => assert_eq!(vs.len(), 10),
            other => panic!("t5 should vary pi, got {other:?}"),
        }
    }
}
