//! `carstat analyze`: the observational workflow. Reads a dataset CSV,
//! validates it, fits the requested regressions, and prints per-treatment
//! coefficient rows (and optional joint Wald tests) for each requested
//! variance estimator.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;

use carstat::estimators::{ate_saturated, ate_sfe, fit_saturated, fit_sfe, AteEstimate};
use carstat::hypothesis::{coefficient_report, wald_test};
use carstat::types::{validate_dataset, LinearHypothesis};
use carstat::variance::{
    v_h_hat, v_hc_saturated, v_hc_sfe, v_ho_saturated, v_ho_sfe, v_new_saturated, v_new_sfe,
    CovarianceEstimate,
};

use crate::dataio::{read_dataset_csv, StratumMap};
use crate::{fmt17, write_output, CmdError, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EstimatorChoice {
    Sat,
    Sfe,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VarianceChoice {
    Ho,
    Hc,
    New,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Dataset CSV with header y,a,s.
    #[arg(long)]
    input: PathBuf,

    /// Which regression(s) to fit.
    #[arg(long, value_enum, default_value = "both")]
    estimator: EstimatorChoice,

    /// Variance estimators to report (comma separated).
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![VarianceChoice::New, VarianceChoice::Hc])]
    variance: Vec<VarianceChoice>,

    /// Significance level for tests and (1 - alpha) intervals of the Wald
    /// section; coefficient intervals are always 95%.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Also print the heterogeneity component and the HC0 sandwich of the
    /// saturated regression.
    #[arg(long)]
    show_components: bool,

    /// Optional joint-hypothesis file: CSV with header psi_1,...,psi_k,c,
    /// one restriction per row.
    #[arg(long)]
    hypothesis: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "table")]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Row {
    estimator: &'static str,
    variance: &'static str,
    treatment: usize,
    report: carstat::hypothesis::CoefficientReport,
}

struct WaldRow {
    estimator: &'static str,
    variance: &'static str,
    result: carstat::hypothesis::TestResult,
}

fn variance_for(
    choice: VarianceChoice,
    estimator: EstimatorKindLocal<'_>,
) -> Result<CovarianceEstimate, CmdError> {
    let v = match estimator {
        EstimatorKindLocal::Sat(fit) => match choice {
            VarianceChoice::Ho => v_ho_saturated(fit),
            VarianceChoice::Hc => v_hc_saturated(fit),
            VarianceChoice::New => v_new_saturated(fit),
        },
        EstimatorKindLocal::Sfe(fit, sat) => match choice {
            VarianceChoice::Ho => v_ho_sfe(fit),
            VarianceChoice::Hc => v_hc_sfe(fit),
            VarianceChoice::New => v_new_sfe(fit, sat),
        },
    };
    v.map_err(CmdError::from)
}

enum EstimatorKindLocal<'a> {
    Sat(&'a carstat::estimators::SaturatedFit),
    Sfe(&'a carstat::estimators::SfeFit, &'a carstat::estimators::SaturatedFit),
}

fn variance_name(v: VarianceChoice) -> &'static str {
    match v {
        VarianceChoice::Ho => "ho",
        VarianceChoice::Hc => "hc",
        VarianceChoice::New => "new",
    }
}

fn read_hypothesis(
    path: &std::path::Path,
    num_treatments: usize,
    alpha: f64,
) -> Result<LinearHypothesis, CmdError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CmdError::input(format!("cannot open {}: {e}", path.display())))?;
    let mut psi_rows: Vec<Vec<f64>> = Vec::new();
    let mut c = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CmdError::input(format!("hypothesis row {}: {e}", idx + 2)))?;
        if record.len() != num_treatments + 1 {
            return Err(CmdError::input(format!(
                "hypothesis row {} has {} fields, expected {} psi entries plus c",
                idx + 2,
                record.len(),
                num_treatments
            )));
        }
        let nums: Vec<f64> = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CmdError::input(format!("hypothesis row {}: {e}", idx + 2)))?;
        psi_rows.push(nums[..num_treatments].to_vec());
        c.push(nums[num_treatments]);
    }
    if psi_rows.is_empty() {
        return Err(CmdError::input("hypothesis file has no rows"));
    }
    let r = psi_rows.len();
    let psi = DMatrix::from_fn(r, num_treatments, |i, j| psi_rows[i][j]);
    LinearHypothesis::new(psi, c, alpha).map_err(CmdError::from)
}

pub fn run(args: AnalyzeArgs) -> Result<(), CmdError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CmdError::input("alpha must lie in (0,1)"));
    }
    if args.variance.is_empty() {
        return Err(CmdError::input("at least one variance estimator required"));
    }
    let (dataset, map) = read_dataset_csv(&args.input)?;
    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        let list = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        // Malformed data (non-finite outcomes) is an input problem; empty
        // cells are well-formed data that the estimators cannot handle.
        let only_empty_cells = violations
            .iter()
            .all(|v| matches!(v, carstat::types::Violation::EmptyCell { .. }));
        return Err(if only_empty_cells {
            CmdError::estimation(format!("dataset fails estimation preconditions: {list}"))
        } else {
            CmdError::input(format!("dataset fails validation: {list}"))
        });
    }

    let want_sat = matches!(args.estimator, EstimatorChoice::Sat | EstimatorChoice::Both);
    let want_sfe = matches!(args.estimator, EstimatorChoice::Sfe | EstimatorChoice::Both);
    // The corrected fixed-effects variance needs the saturated fit too.
    let sat_fit = fit_saturated(&dataset).map_err(|e| CmdError {
        code: 3,
        message: e.to_string(),
    })?;
    let sfe_fit = if want_sfe {
        Some(fit_sfe(&dataset).map_err(|e| CmdError {
            code: 3,
            message: e.to_string(),
        })?)
    } else {
        None
    };

    let hypothesis = args
        .hypothesis
        .as_deref()
        .map(|p| read_hypothesis(p, dataset.num_treatments(), args.alpha))
        .transpose()?;

    let mut rows = Vec::new();
    let mut wald_rows = Vec::new();
    let mut estimates: Vec<(&'static str, AteEstimate)> = Vec::new();
    if want_sat {
        estimates.push(("sat", ate_saturated(&sat_fit)));
    }
    if let Some(sfe) = &sfe_fit {
        estimates.push(("sfe", ate_sfe(sfe)));
    }
    for (name, theta) in &estimates {
        for &vc in &args.variance {
            let kind = match *name {
                "sat" => EstimatorKindLocal::Sat(&sat_fit),
                _ => EstimatorKindLocal::Sfe(sfe_fit.as_ref().unwrap(), &sat_fit),
            };
            let v = variance_for(vc, kind)?;
            for a in 1..=dataset.num_treatments() {
                rows.push(Row {
                    estimator: name,
                    variance: variance_name(vc),
                    treatment: a,
                    report: coefficient_report(theta, &v, a).map_err(CmdError::from)?,
                });
            }
            if let Some(hyp) = &hypothesis {
                wald_rows.push(WaldRow {
                    estimator: name,
                    variance: variance_name(vc),
                    result: wald_test(theta, &v, hyp).map_err(|e| CmdError {
                        code: 3,
                        message: e.to_string(),
                    })?,
                });
            }
        }
    }

    let mut out = String::new();
    render_header(&mut out, &dataset, &map, sfe_fit.as_ref());
    match args.format {
        Format::Csv => render_csv(&mut out, &rows, &wald_rows),
        Format::Table => render_table(&mut out, &rows, &wald_rows),
    }
    if args.show_components {
        render_components(&mut out, &sat_fit, args.format)?;
    }
    write_output(args.out.as_deref(), &out)
}

fn render_header(
    out: &mut String,
    dataset: &carstat::types::Dataset,
    map: &StratumMap,
    sfe: Option<&carstat::estimators::SfeFit>,
) {
    let _ = writeln!(
        out,
        "# n = {}, treatments = {}, strata = {}",
        dataset.len(),
        dataset.num_treatments(),
        dataset.num_strata()
    );
    let mapping = map
        .entries()
        .map(|(code, label)| format!("{label} -> {code}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "# stratum codes: {mapping}");
    if let Some(fit) = sfe {
        if !fit.proportions_approximately_constant(0.05) {
            let _ = writeln!(
                out,
                "# warning: observed assignment shares vary across strata; the \
                 fixed-effects estimator does not target the ATE in that regime"
            );
        }
    }
}

fn render_csv(out: &mut String, rows: &[Row], wald: &[WaldRow]) {
    let _ = writeln!(
        out,
        "estimator,variance,treatment,estimate,std_error,t_stat,p_value,ci_low,ci_high"
    );
    for r in rows {
        let c = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.estimator,
            r.variance,
            r.treatment,
            fmt17(c.estimate),
            fmt17(c.std_error),
            fmt17(c.t_stat),
            fmt17(c.p_value),
            fmt17(c.ci_low),
            fmt17(c.ci_high)
        );
    }
    if !wald.is_empty() {
        let _ = writeln!(
            out,
            "wald,estimator,variance,statistic,df,p_value,critical_value,reject"
        );
        for w in wald {
            let _ = writeln!(
                out,
                "wald,{},{},{},{},{},{},{}",
                w.estimator,
                w.variance,
                fmt17(w.result.statistic),
                w.result.df,
                fmt17(w.result.p_value),
                fmt17(w.result.critical_value),
                w.result.reject
            );
        }
    }
}

fn render_table(out: &mut String, rows: &[Row], wald: &[WaldRow]) {
    let _ = writeln!(
        out,
        "{:<5} {:<4} {:>9} {:>9} {:>8} {:>8} {:>8} {:>18}",
        "est.", "var.", "treat.", "coef.", "s.e.", "t-stat", "p-value", "[95% conf. int.]"
    );
    for r in rows {
        let c = &r.report;
        let _ = writeln!(
            out,
            "{:<5} {:<4} {:>9} {:>9.3} {:>8.3} {:>8.3} {:>8.3} [{:>7.3}, {:>7.3}]",
            r.estimator,
            r.variance,
            r.treatment,
            c.estimate,
            c.std_error,
            c.t_stat,
            c.p_value,
            c.ci_low,
            c.ci_high
        );
    }
    if !wald.is_empty() {
        let _ = writeln!(out, "\njoint Wald tests");
        let _ = writeln!(
            out,
            "{:<5} {:<4} {:>10} {:>4} {:>8} {:>10} {:>7}",
            "est.", "var.", "statistic", "df", "p-value", "critical", "reject"
        );
        for w in wald {
            let _ = writeln!(
                out,
                "{:<5} {:<4} {:>10.4} {:>4} {:>8.4} {:>10.4} {:>7}",
                w.estimator,
                w.variance,
                w.result.statistic,
                w.result.df,
                w.result.p_value,
                w.result.critical_value,
                w.result.reject
            );
        }
    }
}

fn render_components(
    out: &mut String,
    sat_fit: &carstat::estimators::SaturatedFit,
    format: Format,
) -> Result<(), CmdError> {
    let theta = ate_saturated(sat_fit);
    let vh = v_h_hat(sat_fit, &theta).map_err(CmdError::from)?;
    let hc = v_hc_saturated(sat_fit).map_err(CmdError::from)?;
    for (name, m) in [("V_H", vh.matrix()), ("V_hc", hc.matrix())] {
        let _ = writeln!(out, "\n# {name} (variance of sqrt(n) x estimate)");
        for i in 0..m.nrows() {
            let row = (0..m.ncols())
                .map(|j| match format {
                    Format::Csv => fmt17(m[(i, j)]),
                    Format::Table => format!("{:>10.4}", m[(i, j)]),
                })
                .collect::<Vec<_>>()
                .join(match format {
                    Format::Csv => ",",
                    Format::Table => " ",
                });
            let _ = writeln!(out, "{row}");
        }
    }
    Ok(())
}
