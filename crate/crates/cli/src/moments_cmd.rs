//! `carstat moments`: estimate a model's population moments by Monte Carlo
//! and write the cache file consumed by analytic-variance assembly.

use std::path::PathBuf;

use clap::Args;

use carstat::dgp::ModelSpec;
use carstat::moments::{population_moments, write_moments, MomentsHeader};
use carstat::rng::RngSeed;
use carstat::types::TargetProportions;
use carstat::variance::{
    scalar_varsigma_h, scalar_varsigma_y, v_analytic_sat, BalanceProfile,
};

use crate::CmdError;

#[derive(Args)]
pub struct MomentsArgs {
    /// Outcome model id, 1 through 4.
    #[arg(long)]
    model: u8,

    #[arg(long, default_value_t = 1.0)]
    gamma: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma1: f64,

    #[arg(long, default_value_t = 0.0)]
    mu0: f64,

    #[arg(long, default_value_t = 0.0)]
    mu1: f64,

    #[arg(long, default_value_t = 10)]
    strata: usize,

    /// Treated share used when summarizing the implied asymptotic
    /// variances (moments themselves do not depend on it).
    #[arg(long, default_value_t = 0.3)]
    pi: f64,

    /// Monte Carlo draws.
    #[arg(long, default_value_t = carstat::moments::DEFAULT_BUDGET)]
    budget: u64,

    #[arg(long, default_value_t = carstat::moments::ORACLE_SEED.seed)]
    seed: u64,

    #[arg(long, default_value_t = carstat::moments::ORACLE_SEED.stream)]
    stream: u64,

    /// Moments cache file to write.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: MomentsArgs) -> Result<(), CmdError> {
    if !(args.pi > 0.0 && args.pi < 1.0) {
        return Err(CmdError::input("pi must lie in (0,1)"));
    }
    let pi = TargetProportions::constant(&[1.0 - args.pi, args.pi], args.strata)
        .map_err(CmdError::from)?;
    let spec = ModelSpec::new(
        args.model,
        args.gamma,
        args.sigma0,
        args.sigma1,
        args.mu0,
        args.mu1,
        args.strata,
        pi.clone(),
        1,
    )
    .map_err(CmdError::from)?;

    let m = population_moments(&spec, args.budget, RngSeed::new(args.seed, args.stream));
    let mut file = std::fs::File::create(&args.out)?;
    write_moments(&mut file, &MomentsHeader::from_spec(&spec), &m)?;

    // Short stdout summary of what the moments imply.
    let vh = scalar_varsigma_h(&m);
    // Rough first-order error bound on the heterogeneity term from the
    // conditional-mean standard errors.
    let vh_se: f64 = (0..m.num_strata())
        .map(|s0| {
            let d = m.cond_m[1][s0] - m.cond_m[0][s0];
            let se = (m.cond_m_se[1][s0].powi(2) + m.cond_m_se[0][s0].powi(2)).sqrt();
            m.p_s[s0] * (2.0 * d.abs() * se + se * se)
        })
        .sum();
    let vy = scalar_varsigma_y(&m, args.pi);
    let sat = v_analytic_sat(&m, &pi).map_err(CmdError::from)?;
    let sfe_srs = carstat::variance::v_analytic_sfe(
        &m,
        &[1.0 - args.pi, args.pi],
        &BalanceProfile::constant(1.0, args.strata).map_err(CmdError::from)?,
    )
    .map_err(CmdError::from)?;
    println!(
        "model {} gamma {} sigma ({}, {}), {} strata, budget {}",
        args.model, args.gamma, args.sigma0, args.sigma1, args.strata, args.budget
    );
    println!("varsigma2_H  = {:.6}  (approx. mc error {:.1e})", vh, vh_se);
    println!("varsigma2_Y  = {:.6}  (at treated share {})", vy, args.pi);
    println!("V_sat        = {:.6}", sat.at(1, 1));
    println!("V_sfe (srs)  = {:.6}", sfe_srs.at(1, 1));
    println!("M_a          = ({:.6}, {:.6})", m.big_m[0], m.big_m[1]);
    println!("wrote {}", args.out.display());
    Ok(())
}
