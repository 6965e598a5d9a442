//! Monte Carlo population moments for an outcome model: stratum
//! probabilities p(s), centered conditional means E[m_a(Z)|s], conditional
//! outcome variances σ²_Ỹ(a)(s), and the grand means M_a = E[m_a(Z)].
//!
//! These are the oracle quantities from which the analytic asymptotic
//! variances are assembled, and the re-centering constants the simulator
//! needs. Estimation is plain Monte Carlo, chunked so that the reduction
//! order is fixed by chunk index and results are independent of thread
//! count.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::dgp::{draw_covariate, m_raw, sigma_of, stratum_of, MeanCache, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Fixed oracle seed used whenever a component needs moments and the caller
/// did not supply a stream.
pub const ORACLE_SEED: RngSeed = RngSeed {
    seed: 0x6d6f_6d65_6e74,
    stream: 7,
};

/// Default draw budget for the oracle.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

const CHUNK: u64 = 1 << 16;

/// Population moments of a two-arm outcome model, all on the centered
/// convention: `cond_m[a][s-1]` is E[m_a(Z)|S=s] with E[m_a(Z)] = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    /// Stratum probabilities p(s), indexed `[s-1]`.
    pub p_s: Vec<f64>,
    pub p_s_se: Vec<f64>,
    /// Centered conditional means, indexed `[arm][s-1]`.
    pub cond_m: Vec<Vec<f64>>,
    pub cond_m_se: Vec<Vec<f64>>,
    /// Conditional variances σ²_Ỹ(a)(s) of the stratum-demeaned potential
    /// outcome, indexed `[arm][s-1]`.
    pub cond_var: Vec<Vec<f64>>,
    pub cond_var_se: Vec<Vec<f64>>,
    /// Grand means M_a of the raw conditional-mean functions.
    pub big_m: Vec<f64>,
    pub big_m_se: Vec<f64>,
    pub mc_budget: u64,
    pub seed: RngSeed,
}

impl PopulationMoments {
    pub fn num_strata(&self) -> usize {
        self.p_s.len()
    }

    /// Number of arms including control.
    pub fn num_arms(&self) -> usize {
        self.cond_m.len()
    }

    pub fn mean_cache(&self) -> MeanCache {
        MeanCache {
            big_m: self.big_m.clone(),
        }
    }

    /// Basic sanity checks for hand-constructed instances.
    pub fn validate(&self) -> Result<()> {
        let s = self.num_strata();
        let arms = self.num_arms();
        let total: f64 = self.p_s.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModelSpec(format!(
                "stratum probabilities sum to {total}"
            )));
        }
        if self.p_s.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidModelSpec("negative stratum probability".into()));
        }
        for grid in [&self.cond_m, &self.cond_var] {
            if grid.len() != arms || grid.iter().any(|row| row.len() != s) {
                return Err(Error::DimensionMismatch("moment grids ragged".into()));
            }
        }
        if self.cond_var.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::InvalidModelSpec("negative conditional variance".into()));
        }
        Ok(())
    }
}

#[derive(Clone)]
struct Accumulator {
    count_s: Vec<u64>,
    // Raw power sums of m_a within each (arm, stratum) cell.
    sum_m: Vec<Vec<f64>>,
    sum_m2: Vec<Vec<f64>>,
    sum_m3: Vec<Vec<f64>>,
    sum_m4: Vec<Vec<f64>>,
    // Σ σ_a(Z)² and Σ σ_a(Z)⁴ within each cell.
    sum_sig2: Vec<Vec<f64>>,
    sum_sig4: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new(num_strata: usize) -> Self {
        let grid = || vec![vec![0.0f64; num_strata]; 2];
        Accumulator {
            count_s: vec![0; num_strata],
            sum_m: grid(),
            sum_m2: grid(),
            sum_m3: grid(),
            sum_m4: grid(),
            sum_sig2: grid(),
            sum_sig4: grid(),
        }
    }

    fn add(&mut self, spec: &ModelSpec, z: f64, s0: usize) {
        self.count_s[s0] += 1;
        for arm in 0..2 {
            let m = m_raw(spec, arm, z);
            let sig = sigma_of(spec, arm, z);
            let m2 = m * m;
            self.sum_m[arm][s0] += m;
            self.sum_m2[arm][s0] += m2;
            self.sum_m3[arm][s0] += m2 * m;
            self.sum_m4[arm][s0] += m2 * m2;
            self.sum_sig2[arm][s0] += sig * sig;
            self.sum_sig4[arm][s0] += sig * sig * sig * sig;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for s0 in 0..self.count_s.len() {
            self.count_s[s0] += other.count_s[s0];
            for arm in 0..2 {
                self.sum_m[arm][s0] += other.sum_m[arm][s0];
                self.sum_m2[arm][s0] += other.sum_m2[arm][s0];
                self.sum_m3[arm][s0] += other.sum_m3[arm][s0];
                self.sum_m4[arm][s0] += other.sum_m4[arm][s0];
                self.sum_sig2[arm][s0] += other.sum_sig2[arm][s0];
                self.sum_sig4[arm][s0] += other.sum_sig4[arm][s0];
            }
        }
    }
}

fn accumulate(spec: &ModelSpec, mc_budget: u64, seed: RngSeed) -> Accumulator {
    let num_chunks = mc_budget.div_ceil(CHUNK);
    let partials: Vec<Accumulator> = (0..num_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Accumulator::new(spec.num_strata);
            let mut rng = seed.child(c).rng();
            let draws = CHUNK.min(mc_budget - c * CHUNK);
            for _ in 0..draws {
                let z = draw_covariate(spec, &mut rng);
                let s0 = stratum_of(z, spec).expect("draw inside support").0 - 1;
                acc.add(spec, z, s0);
            }
            acc
        })
        .collect();
    // Sequential merge in chunk order keeps the floating-point reduction
    // identical across thread counts.
    let mut total = Accumulator::new(spec.num_strata);
    for p in &partials {
        total.merge(p);
    }
    total
}

/// Monte Carlo estimate of M_a = E[m_a(Z)] only: what the simulator needs
/// to re-center models 2–4.
pub fn compute_mean_cache(spec: &ModelSpec, mc_budget: u64, seed: RngSeed) -> MeanCache {
    if spec.model_id == 1 {
        return MeanCache::exact_model1();
    }
    let acc = accumulate(spec, mc_budget, seed);
    let n = mc_budget as f64;
    let big_m = (0..2)
        .map(|arm| acc.sum_m[arm].iter().sum::<f64>() / n)
        .collect();
    MeanCache { big_m }
}

/// Full population-moment estimate by plain Monte Carlo.
///
/// Conditional variances use the decomposition σ²_Ỹ(a)(s) =
/// Var[m_a(Z)|s] + E[σ_a(Z)²|s]·Var(ε_a) with the exact noise variance, so
/// no noise is simulated. Reported standard errors for the variance terms
/// combine the two components in quadrature and are approximate.
pub fn population_moments(spec: &ModelSpec, mc_budget: u64, seed: RngSeed) -> PopulationMoments {
    let acc = accumulate(spec, mc_budget, seed);
    let n_total = mc_budget as f64;
    let num_strata = spec.num_strata;
    let eps_var = spec.noise_variance();

    let mut p_s = vec![0.0; num_strata];
    let mut p_s_se = vec![0.0; num_strata];
    for s0 in 0..num_strata {
        let p = acc.count_s[s0] as f64 / n_total;
        p_s[s0] = p;
        p_s_se[s0] = (p * (1.0 - p) / n_total).sqrt();
    }

    let mut big_m = vec![0.0; 2];
    let mut big_m_se = vec![0.0; 2];
    for arm in 0..2 {
        let sum: f64 = acc.sum_m[arm].iter().sum();
        let sum2: f64 = acc.sum_m2[arm].iter().sum();
        let mean = sum / n_total;
        big_m[arm] = mean;
        big_m_se[arm] = ((sum2 / n_total - mean * mean) / n_total).max(0.0).sqrt();
    }

    let grid = || vec![vec![0.0f64; num_strata]; 2];
    let mut cond_m = grid();
    let mut cond_m_se = grid();
    let mut cond_var = grid();
    let mut cond_var_se = grid();
    for arm in 0..2 {
        for s0 in 0..num_strata {
            let k = acc.count_s[s0] as f64;
            let mean = acc.sum_m[arm][s0] / k;
            // Central moments of m within the cell from raw power sums.
            let var =
                ((acc.sum_m2[arm][s0] - k * mean * mean) / (k - 1.0)).max(0.0);
            let mu4 = (acc.sum_m4[arm][s0] - 4.0 * mean * acc.sum_m3[arm][s0]
                + 6.0 * mean * mean * acc.sum_m2[arm][s0]
                - 3.0 * k * mean.powi(4))
                / k;
            let var_se = ((mu4 - var * var).max(0.0) / k).sqrt();
            let sig2_mean = acc.sum_sig2[arm][s0] / k;
            let sig2_se =
                ((acc.sum_sig4[arm][s0] / k - sig2_mean * sig2_mean).max(0.0) / k).sqrt();

            cond_m[arm][s0] = mean - big_m[arm];
            cond_m_se[arm][s0] = (var / k).sqrt();
            cond_var[arm][s0] = var + eps_var * sig2_mean;
            cond_var_se[arm][s0] = (var_se * var_se + (eps_var * sig2_se).powi(2)).sqrt();
        }
    }

    PopulationMoments {
        p_s,
        p_s_se,
        cond_m,
        cond_m_se,
        cond_var,
        cond_var_se,
        big_m,
        big_m_se,
        mc_budget,
        seed,
    }
}

/// Header recorded in a moments cache file alongside the moment arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentsHeader {
    pub model_id: u8,
    pub gamma: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub num_strata: usize,
}

impl MomentsHeader {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        MomentsHeader {
            model_id: spec.model_id,
            gamma: spec.gamma,
            sigma0: spec.sigma0,
            sigma1: spec.sigma1,
            mu0: spec.mu0,
            mu1: spec.mu1,
            num_strata: spec.num_strata,
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write the versioned, self-describing moments cache.
pub fn write_moments<W: Write>(
    w: &mut W,
    header: &MomentsHeader,
    m: &PopulationMoments,
) -> std::io::Result<()> {
    writeln!(w, "# population moments cache")?;
    writeln!(w, "format,carstat-moments,1")?;
    writeln!(w, "model,{}", header.model_id)?;
    writeln!(w, "gamma,{}", fmt17(header.gamma))?;
    writeln!(w, "sigma0,{}", fmt17(header.sigma0))?;
    writeln!(w, "sigma1,{}", fmt17(header.sigma1))?;
    writeln!(w, "mu0,{}", fmt17(header.mu0))?;
    writeln!(w, "mu1,{}", fmt17(header.mu1))?;
    writeln!(w, "num_strata,{}", header.num_strata)?;
    writeln!(w, "budget,{}", m.mc_budget)?;
    writeln!(w, "seed,{},{}", m.seed.seed, m.seed.stream)?;
    for (s0, (&p, &se)) in m.p_s.iter().zip(&m.p_s_se).enumerate() {
        writeln!(w, "p_s,{},{},{}", s0 + 1, fmt17(p), fmt17(se))?;
    }
    for arm in 0..m.num_arms() {
        for s0 in 0..m.num_strata() {
            writeln!(
                w,
                "cond_m,{arm},{},{},{}",
                s0 + 1,
                fmt17(m.cond_m[arm][s0]),
                fmt17(m.cond_m_se[arm][s0])
            )?;
        }
    }
    for arm in 0..m.num_arms() {
        for s0 in 0..m.num_strata() {
            writeln!(
                w,
                "cond_var,{arm},{},{},{}",
                s0 + 1,
                fmt17(m.cond_var[arm][s0]),
                fmt17(m.cond_var_se[arm][s0])
            )?;
        }
    }
    for arm in 0..m.num_arms() {
        writeln!(
            w,
            "big_m,{arm},{},{}",
            fmt17(m.big_m[arm]),
            fmt17(m.big_m_se[arm])
        )?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Read a moments cache written by [`write_moments`].
pub fn read_moments<R: BufRead>(r: R) -> Result<(MomentsHeader, PopulationMoments)> {
    let mut header = MomentsHeader {
        model_id: 0,
        gamma: f64::NAN,
        sigma0: f64::NAN,
        sigma1: f64::NAN,
        mu0: f64::NAN,
        mu1: f64::NAN,
        num_strata: 0,
    };
    let mut budget = 0u64;
    let mut seed = RngSeed::new(0, 0);
    let mut p_s: Vec<(usize, f64, f64)> = Vec::new();
    let mut cond_m: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut cond_var: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut big_m: Vec<(usize, f64, f64)> = Vec::new();
    let mut saw_format = false;

    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let f = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| parse_err(lineno, "missing field"))?
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad number: {e}")))
        };
        let u = |i: usize| -> Result<usize> {
            fields
                .get(i)
                .ok_or_else(|| parse_err(lineno, "missing field"))?
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("bad integer: {e}")))
        };
        match fields[0] {
            "format" => {
                if fields.get(1) != Some(&"carstat-moments") {
                    return Err(parse_err(lineno, "not a carstat moments file"));
                }
                saw_format = true;
            }
            "model" => header.model_id = u(1)? as u8,
            "gamma" => header.gamma = f(1)?,
            "sigma0" => header.sigma0 = f(1)?,
            "sigma1" => header.sigma1 = f(1)?,
            "mu0" => header.mu0 = f(1)?,
            "mu1" => header.mu1 = f(1)?,
            "num_strata" => header.num_strata = u(1)?,
            "budget" => budget = u(1)? as u64,
            "seed" => {
                seed = RngSeed::new(
                    fields
                        .get(1)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(lineno, "bad seed"))?,
                    fields
                        .get(2)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(lineno, "bad stream"))?,
                )
            }
            "p_s" => p_s.push((u(1)?, f(2)?, f(3)?)),
            "cond_m" => cond_m.push((u(1)?, u(2)?, f(3)?, f(4)?)),
            "cond_var" => cond_var.push((u(1)?, u(2)?, f(3)?, f(4)?)),
            "big_m" => big_m.push((u(1)?, f(2)?, f(3)?)),
            other => return Err(parse_err(lineno, format!("unknown record '{other}'"))),
        }
    }
    if !saw_format {
        return Err(parse_err(0, "missing format line"));
    }
    let s = header.num_strata;
    if s == 0 || p_s.len() != s || big_m.len() != 2 || cond_m.len() != 2 * s {
        return Err(parse_err(0, "incomplete moments file"));
    }
    let grid = || vec![vec![0.0f64; s]; 2];
    let mut m = PopulationMoments {
        p_s: vec![0.0; s],
        p_s_se: vec![0.0; s],
        cond_m: grid(),
        cond_m_se: grid(),
        cond_var: grid(),
        cond_var_se: grid(),
        big_m: vec![0.0; 2],
        big_m_se: vec![0.0; 2],
        mc_budget: budget,
        seed,
    };
    for (stratum, v, se) in p_s {
        m.p_s[stratum - 1] = v;
        m.p_s_se[stratum - 1] = se;
    }
    for (arm, stratum, v, se) in cond_m {
        m.cond_m[arm][stratum - 1] = v;
        m.cond_m_se[arm][stratum - 1] = se;
    }
    for (arm, stratum, v, se) in cond_var {
        m.cond_var[arm][stratum - 1] = v;
        m.cond_var_se[arm][stratum - 1] = se;
    }
    for (arm, v, se) in big_m {
        m.big_m[arm] = v;
        m.big_m_se[arm] = se;
    }
    m.validate()?;
    Ok((header, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TargetProportions;

    fn spec(model_id: u8) -> ModelSpec {
        let pi = TargetProportions::constant(&[0.7, 0.3], 10).unwrap();
        ModelSpec::new(model_id, 1.0, 1.0, 1.0, 0.0, 0.0, 10, pi, 500).unwrap()
    }

    #[test]
    fn moments_file_roundtrip() {
        let s = spec(2);
        let m = population_moments(&s, 200_000, RngSeed::new(3, 1));
        let mut buf = Vec::new();
        write_moments(&mut buf, &MomentsHeader::from_spec(&s), &m).unwrap();
        let (h, back) = read_moments(buf.as_slice()).unwrap();
        assert_eq!(h, MomentsHeader::from_spec(&s));
        assert_eq!(back, m);
    }

    #[test]
    fn model1_big_m_exact_zero() {
        let cache = compute_mean_cache(&spec(1), 1000, RngSeed::new(1, 1));
        assert_eq!(cache.big_m, vec![0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_moments() {
        let s = spec(3);
        let a = population_moments(&s, 100_000, RngSeed::new(9, 2));
        let b = population_moments(&s, 100_000, RngSeed::new(9, 2));
        assert_eq!(a, b);
    }
}
