//! `carstat power`: limiting local power curves.
//!
//! Two modes:
//! - direct: `--df R --mu LIST` evaluates the exactly studentized power at
//!   each noncentrality;
//! - model-based: `--moments FILE --pi P` builds the asymptotic variance of
//!   the chosen estimator from a moments cache and sweeps `--lambda LIST`
//!   (or `--theta LIST --n-ref N`, with λ = √n·θ). `--studentizer ho|hc`
//!   evaluates the mis-studentized test by Monte Carlo.
//!
//! Output columns: lambda, mu, power, std_error, method.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;

use carstat::moments::read_moments;
use carstat::power::{local_power, LocalPowerProblem, PowerEstimate, PowerMethod};
use carstat::rng::RngSeed;
use carstat::types::TargetProportions;
use carstat::variance::{
    sat_hc_limit, sat_ho_limit, sfe_hc_limit, sfe_ho_limit, v_analytic_sat, v_analytic_sfe,
    BalanceProfile,
};

use crate::{fmt17, write_output, CmdError, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PowerEstimator {
    Sat,
    Sfe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Studentizer {
    /// Consistent studentization (closed-form noncentral tail).
    New,
    /// Homoskedasticity-only sandwich limit (Monte Carlo).
    Ho,
    /// HC0 sandwich limit (Monte Carlo).
    Hc,
}

#[derive(Args)]
pub struct PowerArgs {
    /// Direct mode: degrees of freedom of the Wald test.
    #[arg(long, conflicts_with = "moments")]
    df: Option<usize>,

    /// Direct mode: noncentrality grid.
    #[arg(long, value_delimiter = ',', requires = "df")]
    mu: Vec<f64>,

    /// Model mode: moments cache file from `carstat moments`.
    #[arg(long)]
    moments: Option<PathBuf>,

    /// Model mode: constant treated share.
    #[arg(long, default_value_t = 0.3)]
    pi: f64,

    /// Model mode: balance parameter tau of the assignment scheme
    /// (0 strong balance, 1 simple random sampling).
    #[arg(long, default_value_t = 0.0)]
    tau: f64,

    #[arg(long, value_enum, default_value = "sat")]
    estimator: PowerEstimator,

    #[arg(long, value_enum, default_value = "new")]
    studentizer: Studentizer,

    /// Model mode: local drift grid for sqrt(n)(theta - theta_0).
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,

    /// Model mode: effect-size grid, converted as lambda = sqrt(n_ref) * theta.
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,

    /// Reference sample size for --theta.
    #[arg(long)]
    n_ref: Option<usize>,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Monte Carlo replications for mis-studentized power.
    #[arg(long, default_value_t = 1_000_000)]
    mc_reps: u64,

    #[arg(long, default_value_t = 11)]
    seed: u64,

    #[arg(long, value_enum, default_value = "csv")]
    format: Format,

    #[arg(long)]
    out: Option<PathBuf>,
}

fn render(rows: &[(f64, f64, PowerEstimate, &str)], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            let _ = writeln!(out, "lambda,mu,power,std_error,method");
            for (lambda, mu, p, method) in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{method}",
                    fmt17(*lambda),
                    fmt17(*mu),
                    fmt17(p.value),
                    fmt17(p.std_error)
                );
            }
        }
        Format::Table => {
            let _ = writeln!(
                out,
                "{:>10} {:>10} {:>8} {:>10} {:>12}",
                "lambda", "mu", "power", "std_error", "method"
            );
            for (lambda, mu, p, method) in rows {
                let _ = writeln!(
                    out,
                    "{lambda:>10.4} {mu:>10.4} {:>8.4} {:>10.2e} {method:>12}",
                    p.value, p.std_error
                );
            }
        }
    }
    out
}

pub fn run(args: PowerArgs) -> Result<(), CmdError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CmdError::input("alpha must lie in (0,1)"));
    }
    let mut rows: Vec<(f64, f64, PowerEstimate, &str)> = Vec::new();

    if let Some(df) = args.df {
        if args.mu.is_empty() {
            return Err(CmdError::input("--df mode requires a --mu grid"));
        }
        for &mu in &args.mu {
            if mu < 0.0 {
                return Err(CmdError::input("noncentralities must be nonnegative"));
            }
            // Any lambda with |lambda|^2 = mu gives this power; report the
            // representative sqrt(mu).
            let mut lambda = vec![0.0; df];
            lambda[0] = mu.sqrt();
            let v = DMatrix::<f64>::identity(df, df);
            let problem =
                LocalPowerProblem::new(v.clone(), v, DMatrix::identity(df, df), lambda, args.alpha)
                    .map_err(CmdError::from)?;
            let p = local_power(&problem, PowerMethod::ClosedForm, 0, RngSeed::new(0, 0))
                .map_err(CmdError::from)?;
            rows.push((mu.sqrt(), mu, p, "closed_form"));
        }
        let text = render(&rows, args.format);
        return write_output(args.out.as_deref(), &text);
    }

    let Some(moments_path) = &args.moments else {
        return Err(CmdError::input(
            "either --df with --mu, or --moments with --lambda/--theta, is required",
        ));
    };
    if !(args.pi > 0.0 && args.pi < 1.0) {
        return Err(CmdError::input("pi must lie in (0,1)"));
    }
    if !(0.0..=1.0).contains(&args.tau) {
        return Err(CmdError::input("tau must lie in [0,1]"));
    }
    let file = std::fs::File::open(moments_path)
        .map_err(|e| CmdError::input(format!("cannot open {}: {e}", moments_path.display())))?;
    let (_, m) = read_moments(std::io::BufReader::new(file)).map_err(CmdError::from)?;

    let mut lambdas = args.lambda.clone();
    match (args.theta.is_empty(), args.n_ref) {
        (false, Some(n_ref)) => {
            lambdas.extend(args.theta.iter().map(|t| (n_ref as f64).sqrt() * t));
        }
        (false, None) => {
            return Err(CmdError::input("--theta requires --n-ref"));
        }
        _ => {}
    }
    if lambdas.is_empty() {
        return Err(CmdError::input("no --lambda or --theta grid given"));
    }

    let pi_col = [1.0 - args.pi, args.pi];
    let pi = TargetProportions::constant(&pi_col, m.num_strata()).map_err(CmdError::from)?;
    let balance = BalanceProfile::constant(args.tau, m.num_strata()).map_err(CmdError::from)?;
    let v = match args.estimator {
        PowerEstimator::Sat => v_analytic_sat(&m, &pi).map_err(CmdError::from)?,
        PowerEstimator::Sfe => {
            v_analytic_sfe(&m, &pi_col, &balance).map_err(CmdError::from)?
        }
    };
    let v_stud = match (args.estimator, args.studentizer) {
        (_, Studentizer::New) => v.clone(),
        (PowerEstimator::Sat, Studentizer::Ho) => {
            sat_ho_limit(&m, &pi).map_err(CmdError::from)?
        }
        (PowerEstimator::Sat, Studentizer::Hc) => {
            sat_hc_limit(&m, &pi).map_err(CmdError::from)?
        }
        (PowerEstimator::Sfe, Studentizer::Ho) => {
            sfe_ho_limit(&m, &pi_col).map_err(CmdError::from)?
        }
        (PowerEstimator::Sfe, Studentizer::Hc) => {
            sfe_hc_limit(&m, &pi_col).map_err(CmdError::from)?
        }
    };
    let psi = DMatrix::identity(1, 1);
    for &lambda in &lambdas {
        let problem = LocalPowerProblem::new(
            v.matrix().clone(),
            v_stud.matrix().clone(),
            psi.clone(),
            vec![lambda],
            args.alpha,
        )
        .map_err(CmdError::from)?;
        let mu = problem.noncentrality().map_err(CmdError::from)?;
        let (p, method) = if matches!(args.studentizer, Studentizer::New) {
            (
                local_power(&problem, PowerMethod::ClosedForm, 0, RngSeed::new(0, 0))
                    .map_err(CmdError::from)?,
                "closed_form",
            )
        } else {
            (
                local_power(
                    &problem,
                    PowerMethod::MonteCarlo,
                    args.mc_reps,
                    RngSeed::new(args.seed, 0),
                )
                .map_err(CmdError::from)?,
                "monte_carlo",
            )
        };
        rows.push((lambda, mu, p, method));
    }
    let text = render(&rows, args.format);
    write_output(args.out.as_deref(), &text)
}
