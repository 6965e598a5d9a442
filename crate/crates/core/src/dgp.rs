//! Outcome-generating processes for the simulation study: four two-arm
//! models over a scalar covariate, with stratification by equal-length
//! intervals of the covariate support.
//!
//! Potential outcomes follow Y(a) = μ_a + (m_a(Z) − M_a) + σ_a(Z)·ε_a with
//! model-specific conditional-mean functions m_a, scale functions σ_a, and
//! noise laws. M_a = E[m_a(Z)] has no closed form for models 2–4 and is
//! supplied by a Monte Carlo mean cache computed under a fixed oracle seed
//! (see [`crate::moments`]).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::randomize::{assign_sbr, assign_srs};
use crate::rng::RngSeed;
use crate::types::{Dataset, Observation, StratumLabel, TargetProportions};

/// Assignment scheme used when simulating a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Simple random sampling (independent Bernoulli-type draws).
    Srs,
    /// Stratified block randomization (permuted blocks within strata).
    Sbr,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Srs => write!(f, "srs"),
            Scheme::Sbr => write!(f, "sbr"),
        }
    }
}

/// Parameters of one simulated experiment: model, coefficients, noise
/// scales, arm means, stratification granularity, target proportions, and
/// sample size. Two-arm (control + one treatment).
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub model_id: u8,
    pub gamma: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub num_strata: usize,
    pub pi: TargetProportions,
    pub n: usize,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model_id: u8,
        gamma: f64,
        sigma0: f64,
        sigma1: f64,
        mu0: f64,
        mu1: f64,
        num_strata: usize,
        pi: TargetProportions,
        n: usize,
    ) -> Result<Self> {
        if !(1..=4).contains(&model_id) {
            return Err(Error::InvalidModelSpec(format!(
                "model_id {model_id} not in 1..=4"
            )));
        }
        if num_strata < 1 {
            return Err(Error::InvalidModelSpec("num_strata must be >= 1".into()));
        }
        if !(sigma0.is_finite() && sigma0 > 0.0 && sigma1.is_finite() && sigma1 > 0.0) {
            return Err(Error::InvalidModelSpec("noise scales must be positive".into()));
        }
        if n < 1 {
            return Err(Error::InvalidModelSpec("n must be >= 1".into()));
        }
        if pi.num_treatments() != 1 {
            return Err(Error::InvalidModelSpec(
                "outcome models are two-arm; pi must have exactly one treatment row".into(),
            ));
        }
        if pi.num_strata() != num_strata {
            return Err(Error::InvalidModelSpec(format!(
                "pi covers {} strata, spec says {num_strata}",
                pi.num_strata()
            )));
        }
        Ok(ModelSpec {
            model_id,
            gamma,
            sigma0,
            sigma1,
            mu0,
            mu1,
            num_strata,
            pi,
            n,
        })
    }

    /// Closed support of the covariate.
    pub fn support(&self) -> (f64, f64) {
        match self.model_id {
            1..=3 => (-SQRT5, SQRT5),
            _ => (-2.0, 2.0),
        }
    }

    /// Variance of the noise variable ε_a (exact, by model).
    pub fn noise_variance(&self) -> f64 {
        match self.model_id {
            // Standard normal noise.
            1..=3 => 1.0,
            // t with 3 degrees of freedom scaled by 1/3: variance 3/9.
            _ => 1.0 / 3.0,
        }
    }
}

#[allow(clippy::excessive_precision)]
const SQRT5: f64 = 2.23606797749978969;
/// 1/sqrt(1/20): scale taking a Beta(2,2) draw to unit variance.
#[allow(clippy::excessive_precision)]
const SQRT20: f64 = 4.47213595499957939;

/// Quantile of the Beta(2,2) distribution: solves 3u² − 2u³ = p on [0,1]
/// by Newton iteration safeguarded with bisection, to |F(u) − p| ≤ 1e-13.
pub fn beta22_quantile(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let f = |u: f64| u * u * (3.0 - 2.0 * u) - p;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut u = 0.5;
    for _ in 0..200 {
        let fu = f(u);
        if fu.abs() <= 1e-13 {
            break;
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let df = 6.0 * u * (1.0 - u);
        let step = fu / df;
        let next = u - step;
        u = if df > 0.0 && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    u
}

/// Draw one covariate: standardized Beta(2,2) (mean 0, variance 1) for
/// models 1–3, Uniform(−2, 2) for model 4. Consumes exactly one uniform.
pub fn draw_covariate<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    match spec.model_id {
        1..=3 => (beta22_quantile(u) - 0.5) * SQRT20,
        _ => -2.0 + 4.0 * u,
    }
}

/// Map a covariate value to its stratum: equal-length intervals of the
/// support, right-open except the last. Values outside the support by more
/// than 1e-9 are an error; closer overshoots clamp to the boundary.
pub fn stratum_of(z: f64, spec: &ModelSpec) -> Result<StratumLabel> {
    let (lo, hi) = spec.support();
    if z < lo - 1e-9 || z > hi + 1e-9 {
        return Err(Error::OutsideSupport { value: z, lo, hi });
    }
    let frac = ((z - lo) / (hi - lo)).clamp(0.0, 1.0);
    let idx = ((frac * spec.num_strata as f64) as usize).min(spec.num_strata - 1);
    Ok(StratumLabel(idx + 1))
}

/// Raw conditional-mean function m_a(z), before the M_a re-centering.
pub(crate) fn m_raw(spec: &ModelSpec, arm: usize, z: f64) -> f64 {
    let g = spec.gamma;
    match (spec.model_id, arm) {
        (1, _) => g * z,
        // Indicator uses the closed inequality z <= 1/2 exactly as specified.
        (2, 0) | (3, 0) => {
            if z <= 0.5 {
                -g * (z + 3.0).ln()
            } else {
                0.0
            }
        }
        (2, 1) | (3, 1) => g * z,
        (4, 0) => {
            if (-1.0..=1.0).contains(&z) {
                g * z * z
            } else {
                g * z
            }
        }
        (4, _) => {
            if (-1.0..=1.0).contains(&z) {
                g * z
            } else {
                g * z * z
            }
        }
        _ => unreachable!("model_id validated at construction"),
    }
}

/// Conditional noise scale σ_a(z).
pub(crate) fn sigma_of(spec: &ModelSpec, arm: usize, z: f64) -> f64 {
    let sigma_a = if arm == 0 { spec.sigma0 } else { spec.sigma1 };
    match spec.model_id {
        1 | 2 => sigma_a,
        _ => sigma_a * z.abs(),
    }
}

/// Cached Monte Carlo values of M_a = E[m_a(Z)], indexed by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCache {
    pub big_m: Vec<f64>,
}

impl MeanCache {
    /// Model 1 has m_0 = m_1 = γZ with E[Z] = 0, so M_a = 0 exactly.
    pub fn exact_model1() -> Self {
        MeanCache {
            big_m: vec![0.0, 0.0],
        }
    }
}

fn draw_noise<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> f64 {
    match spec.model_id {
        1..=3 => rng.sample(StandardNormal),
        _ => {
            // (1/3)·t_3 built as N / sqrt(chi²_3 / 3), then scaled.
            let z: f64 = rng.sample(StandardNormal);
            let c1: f64 = rng.sample(StandardNormal);
            let c2: f64 = rng.sample(StandardNormal);
            let c3: f64 = rng.sample(StandardNormal);
            let chi2 = c1 * c1 + c2 * c2 + c3 * c3;
            z / (chi2 / 3.0).sqrt() / 3.0
        }
    }
}

/// Both potential outcomes at covariate `z`, consuming the control-arm
/// noise first. Models 2–4 require the mean cache.
pub fn potential_outcomes<R: Rng + ?Sized>(
    spec: &ModelSpec,
    cache: Option<&MeanCache>,
    z: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let big_m: [f64; 2] = match (spec.model_id, cache) {
        (1, _) => [0.0, 0.0],
        (_, Some(c)) => [c.big_m[0], c.big_m[1]],
        (m, None) => return Err(Error::MissingMeanCache { model: m }),
    };
    let eps0 = draw_noise(spec, rng);
    let eps1 = draw_noise(spec, rng);
    let y0 = spec.mu0 + (m_raw(spec, 0, z) - big_m[0]) + sigma_of(spec, 0, z) * eps0;
    let y1 = spec.mu1 + (m_raw(spec, 1, z) - big_m[1]) + sigma_of(spec, 1, z) * eps1;
    Ok((y0, y1))
}

/// Simulate one experiment: draw covariates and both potential outcomes,
/// assign treatment by `scheme`, and reveal the assigned-arm outcome.
///
/// Stream layout: `seed.child(1)` drives covariates and noise (in unit
/// order), `seed.child(2)` drives the assignment mechanism.
pub fn simulate_dataset(
    spec: &ModelSpec,
    scheme: Scheme,
    cache: Option<&MeanCache>,
    seed: RngSeed,
) -> Result<Dataset> {
    let mut data_rng = seed.child(1).rng();
    let mut strata = Vec::with_capacity(spec.n);
    let mut potentials = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let z = draw_covariate(spec, &mut data_rng);
        strata.push(stratum_of(z, spec)?);
        potentials.push(potential_outcomes(spec, cache, z, &mut data_rng)?);
    }
    let assignment = match scheme {
        Scheme::Srs => assign_srs(&strata, &spec.pi, seed.child(2))?,
        Scheme::Sbr => assign_sbr(&strata, &spec.pi, seed.child(2))?,
    };
    let observations = strata
        .iter()
        .zip(potentials.iter())
        .zip(assignment.labels.iter())
        .map(|((&s, &(y0, y1)), &a)| Observation {
            y: if a.0 == 0 { y0 } else { y1 },
            a,
            s,
        })
        .collect();
    Dataset::new(observations, 1, spec.num_strata)
}
