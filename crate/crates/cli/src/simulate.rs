//! `carstat simulate`: run the rejection-rate study for one of the shipped
//! reference tables and optionally check the result against it.

use std::path::PathBuf;

use clap::Args;

use carstat::montecarlo::{
    compare_to_reference, reference_table, run_study, table_configs, write_table, RejectionTable,
};
use carstat::rng::RngSeed;

use crate::{write_output, CmdError};

#[derive(Args)]
pub struct SimulateArgs {
    /// Reference table id: t1, t2, t3, t4, or t5.
    table: String,

    /// Replications per (model, scheme, side).
    #[arg(long, default_value_t = 10_000)]
    reps: u64,

    /// Master seed; every replication derives from it deterministically.
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Seed stream component.
    #[arg(long, default_value_t = 0)]
    stream: u64,

    /// Override the sample size per replication (default: the reference
    /// table's n).
    #[arg(long)]
    n: Option<usize>,

    /// Write the table CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Compare against the shipped reference values (cells the reference
    /// marks `exclude` are skipped) and exit 4 on failure.
    #[arg(long)]
    check: bool,

    /// Tolerance for --check, in percentage points.
    #[arg(long, default_value_t = 1.5)]
    tol_pp: f64,
}

pub fn run(args: SimulateArgs) -> Result<(), CmdError> {
    let reference = reference_table(&args.table).map_err(CmdError::from)?;
    let configs = table_configs(
        &reference,
        args.reps,
        RngSeed::new(args.seed, args.stream),
        args.n,
    )
    .map_err(CmdError::from)?;

    let mut studies = Vec::new();
    for config in &configs {
        studies.push(run_study(config).map_err(|e| CmdError {
            code: 3,
            message: e.to_string(),
        })?);
    }
    let table =
        RejectionTable::merge(studies, &args.table).map_err(CmdError::from)?;

    let mut text = Vec::new();
    write_table(&mut text, &table)?;
    write_output(args.out.as_deref(), std::str::from_utf8(&text).expect("utf8"))?;

    if args.check {
        let keep = |k: &carstat::montecarlo::CellKey| !reference.excluded.contains(k);
        let report = compare_to_reference(
            &table.filtered(keep),
            &reference.filtered(keep),
            args.tol_pp,
        )
        .map_err(CmdError::from)?;
        let n_cells = report.cells.len();
        let failures: Vec<_> = report.failures().collect();
        eprintln!(
            "check vs {}: {}/{} cells within {} pp ({} excluded by the reference file)",
            args.table,
            n_cells - failures.len(),
            n_cells,
            args.tol_pp,
            reference.excluded.len()
        );
        if !failures.is_empty() {
            for f in &failures {
                eprintln!(
                    "  fail: model {} {} {}/{} {}: got {:.2}%, reference {:.2}% (diff {:.2} pp)",
                    f.key.model,
                    f.key.scheme,
                    f.key.test.estimator,
                    f.key.test.variance,
                    f.key.side,
                    f.ours * 100.0,
                    f.reference * 100.0,
                    f.diff_pp
                );
            }
            return Err(CmdError::check(format!(
                "{} of {} cells outside {} pp",
                failures.len(),
                n_cells,
                args.tol_pp
            )));
        }
    }
    Ok(())
}
