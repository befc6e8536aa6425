//! Simulation study with three data-generating distributions that differ
//! only in the conditional variance of the outcome.
//!
//! `W = (V, W₁, W₂)`; `A = 0` with probability 0.8 when `W₁ ≥ 1.1` and
//! `W₂ ≥ 0.8` and 0.1 otherwise, else `A - 1` is noncentral χ²₁; `Y` is
//! Gaussian around `A(W₁+W₂)/6 + W₁ + W₂/4 + exp((W₁+W₂)/10)` with a
//! standard deviation that depends on `(j, V)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Dataset, ExposureKind, OutcomeRange, OutcomeScale, SamplingFunction, StratumDomain, StratumId, WeightedSample,
};
use crate::design::{draw_fixed_size, make_plan, make_plan_excluding, FixedSizeDesign, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::pilot::{run_pilot, PilotConfig, DEFAULT_H_FLOOR};
use crate::rng::{replicate_stream, Purpose};
use crate::stats::{jarque_bera, NormalityTest};
use crate::tmle::{estimate_continuous, ContinuousConfig, EstimatorKind};

/// Reference value of the variable importance, shared by all three distributions.
pub const PSI_C_REFERENCE: f64 = 0.1204;

/// Outcome range per distribution: 0.001 and 0.999 quantiles of `Y` over
/// 10⁶ draws (seed 20_240_601), see [`calibrate_outcome_range`].
pub const Y_RANGE: [[f64; 2]; 3] = [
    [-6.715_699, 11.364_368],
    [-26.861_900, 31.957_262],
    [-124.501_319, 127.608_621],
];

/// Truncation of `g(0 | W)` used by the study. Logistic fits of the step-shaped
/// exposure mechanism extrapolate towards 0 in the strata far from the
/// `A = 0` quadrant; 0.01 lets `μ/g` dominate the influence curve there.
pub const STUDY_G_MIN: f64 = 0.05;

/// Largest `n/N` accepted without `allow_large_fraction`.
pub const MAX_FRACTION: f64 = 0.05;

/// Parameters of one data-generating distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub j: u8,
    pub stratum_probs: [f64; 3],
    pub means: [[f64; 2]; 3],
    /// `(var₁, cov, var₂)` per stratum.
    pub covariances: [[f64; 3]; 3],
    pub thresholds: [f64; 2],
    /// `P(A = 0)` inside and outside the threshold quadrant.
    pub zero_probs: [f64; 2],
    pub outcome_sd: [f64; 3],
    pub y_range: [f64; 2],
}

impl DgpSpec {
    pub fn new(j: u8) -> Result<Self> {
        let outcome_sd = match j {
            1 => [1.5, 1.0, 0.5],
            2 => [1.0, 5.0, 10.0],
            3 => [50.0, 10.0, 1.0],
            _ => return Err(Error::InvalidInput(format!("distribution index must be 1, 2 or 3, got {j}"))),
        };
        Ok(Self {
            j,
            stratum_probs: [1.0 / 6.0, 1.0 / 3.0, 0.5],
            means: [[0.0, 0.0], [1.0, 0.5], [0.5, 1.0]],
            covariances: [[1.0, -0.2, 1.0], [0.5, 0.1, 0.5], [1.0, 0.0, 1.0]],
            thresholds: [1.1, 0.8],
            zero_probs: [0.8, 0.1],
            outcome_sd,
            y_range: Y_RANGE[j as usize - 1],
        })
    }

    /// `E[Y | A = a, W = (w₁, w₂)]` before rescaling.
    pub fn outcome_mean(a: f64, w1: f64, w2: f64) -> f64 {
        a * (w1 + w2) / 6.0 + w1 + w2 / 4.0 + ((w1 + w2) / 10.0).exp()
    }
}

/// One draw on the original outcome scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimObservation {
    pub v: StratumId,
    pub w: [f64; 2],
    pub a: f64,
    pub y: f64,
}

fn draw_context<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> (StratumId, [f64; 2]) {
    let u: f64 = rng.random();
    let v = if u < spec.stratum_probs[0] {
        0
    } else if u < spec.stratum_probs[0] + spec.stratum_probs[1] {
        1
    } else {
        2
    };
    let [s11, s12, s22] = spec.covariances[v];
    // Cholesky factor of the 2×2 covariance.
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let m = spec.means[v];
    (v as StratumId, [m[0] + l11 * z1, m[1] + l21 * z1 + l22 * z2])
}

fn draw_exposure<R: Rng + ?Sized>(spec: &DgpSpec, w: [f64; 2], rng: &mut R) -> f64 {
    let [t1, t2] = spec.thresholds;
    let p0 = if w[0] >= t1 && w[1] >= t2 {
        spec.zero_probs[0]
    } else {
        spec.zero_probs[1]
    };
    if rng.random::<f64>() < p0 {
        return 0.0;
    }
    let lambda = ((w[0] - t1).powi(2) + (w[1] - t2).powi(2)).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    1.0 + (z + lambda.sqrt()).powi(2)
}

pub fn draw_observation<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> SimObservation {
    let (v, w) = draw_context(spec, rng);
    let a = draw_exposure(spec, w, rng);
    let z: f64 = StandardNormal.sample(rng);
    let y = DgpSpec::outcome_mean(a, w[0], w[1]) + spec.outcome_sd[v as usize] * z;
    SimObservation { v, w, a, y }
}

/// `N` draws as a [`Dataset`] with two covariates, three strata and the
/// outcome rescaled over the fixed range of `spec`.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &DgpSpec, big_n: usize, rng: &mut R) -> Result<Dataset> {
    let draws: Vec<SimObservation> = (0..big_n).map(|_| draw_observation(spec, rng)).collect();
    let hi = draws.iter().fold(0.0f64, |m, o| m.max(o.a));
    let mut b = Dataset::builder(2, ExposureKind::Continuous { lo: 0.0, hi }, StratumDomain::numbered(3))
        .with_capacity(big_n);
    for o in &draws {
        b.push_parts(&o.w, o.a, o.y, o.v)?;
    }
    b.build(OutcomeRange::Fixed(OutcomeScale::new(spec.y_range[0], spec.y_range[1])?))
}

/// Empirical 0.001 and 0.999 quantiles of `Y` over `draws` draws.
pub fn calibrate_outcome_range(spec: &DgpSpec, draws: usize, seed: u64) -> [f64; 2] {
    let mut rng = crate::rng::stream(seed, (Purpose::Data as u64) << 12 | u64::from(spec.j));
    let mut ys: Vec<f64> = (0..draws).map(|_| draw_observation(spec, &mut rng).y).collect();
    ys.sort_unstable_by(f64::total_cmp);
    let q = |p: f64| ys[((p * draws as f64).floor() as usize).min(draws - 1)];
    [q(0.001), q(0.999)]
}

/// `E[A²(W₁+W₂)/6] / E[A²]` by Monte Carlo.
pub fn true_psi_c_monte_carlo(spec: &DgpSpec, draws: usize, seed: u64) -> f64 {
    let mut rng = crate::rng::stream(seed, Purpose::MonteCarlo as u64);
    let (mut num, mut den) = (crate::sum::CompensatedSum::new(), crate::sum::CompensatedSum::new());
    for _ in 0..draws {
        let (_, w) = draw_context(spec, &mut rng);
        let a = draw_exposure(spec, w, &mut rng);
        num.add(a * a * (w[0] + w[1]) / 6.0);
        den.add(a * a);
    }
    num.value() / den.value()
}

/// Reference value of `ψᶜ`; the same for every `j`.
pub fn true_psi_c(_spec: &DgpSpec) -> f64 {
    PSI_C_REFERENCE
}

/// Sampling function of a study arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HMode {
    /// Optimal `h` from a uniform pilot.
    Pilot,
    Uniform,
}

impl std::fmt::Display for HMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HMode::Pilot => "pilot",
            HMode::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub big_n: usize,
    pub replicates: usize,
    pub n_grid: Vec<usize>,
    pub dgps: Vec<u8>,
    pub h_modes: Vec<HMode>,
    pub n0: usize,
    pub floor: f64,
    pub seed: u64,
    pub design: FixedSizeDesign,
    pub allow_large_fraction: bool,
    /// Fraction of failed replicates tolerated per arm.
    pub max_failure_rate: f64,
    pub alpha: f64,
    pub continuous: ContinuousConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            big_n: 200_000,
            replicates: 200,
            n_grid: vec![500, 2000, 5000],
            dgps: vec![1, 2, 3],
            h_modes: vec![HMode::Pilot, HMode::Uniform],
            n0: 1000,
            floor: DEFAULT_H_FLOOR,
            seed: 0,
            design: FixedSizeDesign::Rejective,
            allow_large_fraction: false,
            max_failure_rate: 0.02,
            alpha: 0.05,
            continuous: ContinuousConfig {
                g_min: STUDY_G_MIN,
                ..ContinuousConfig::default()
            },
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.n_grid.is_empty() || self.dgps.is_empty() || self.h_modes.is_empty() {
            return Err(Error::InvalidInput("study needs replicates, sizes, distributions and h modes".into()));
        }
        for &j in &self.dgps {
            DgpSpec::new(j)?;
        }
        for &n in &self.n_grid {
            let frac = n as f64 / self.big_n as f64;
            if n == 0 || n >= self.big_n {
                return Err(Error::SampleSizeTooLarge { n, big_n: self.big_n });
            }
            if frac > MAX_FRACTION && !self.allow_large_fraction {
                return Err(Error::InvalidInput(format!(
                    "n/N = {frac:.3} exceeds {MAX_FRACTION}; pass allow_large_fraction to run it anyway"
                )));
            }
        }
        if self.h_modes.contains(&HMode::Pilot) && self.n0 + self.n_grid.iter().max().unwrap() >= self.big_n {
            return Err(Error::InvalidInput("pilot and main samples do not fit in the data set".into()));
        }
        Ok(())
    }
}

/// Estimate of one arm in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimate {
    pub psi: f64,
    pub sigma_n: f64,
    pub gamma_n: f64,
    pub covers: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
struct ReplicateOutcome {
    /// Indexed like [`StudyConfig::arms`].
    arms: Vec<std::result::Result<ArmEstimate, String>>,
    /// Pilot `h` per entry of `dgps`, if a pilot ran.
    h_opt: Vec<Option<Vec<f64>>>,
    clipped: Vec<usize>,
}

/// Metrics of one `(j, h mode, n)` arm, named after the usual table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub j: u8,
    pub h_mode: HMode,
    pub n: usize,
    /// `b.`: mean absolute error.
    pub bias: f64,
    /// Mean signed error.
    pub mean_error: f64,
    /// Jarque–Bera p-value of the estimates.
    pub jb_p_value: f64,
    /// `c.`
    pub coverage: f64,
    /// `v.`: `n` times the empirical variance.
    pub n_var: f64,
    /// `e.v.`: mean of `Σₙ`.
    pub mean_sigma_n: f64,
    pub replicates: usize,
    pub failures: usize,
    pub not_converged: usize,
}

/// Pilot summary of one distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotSummary {
    pub j: u8,
    /// Per-stratum median of the pilot `h` over replicates.
    pub h_median: Vec<f64>,
    /// `h` of the first replicate.
    pub h_first: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    pub psi_0: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub arms: Vec<ArmMetrics>,
    pub pilots: Vec<PilotSummary>,
    /// Mean fraction of outcomes clipped into the fixed range, per distribution.
    pub clipped_fraction: Vec<(u8, f64)>,
}

impl StudyMetrics {
    pub fn arm(&self, j: u8, h_mode: HMode, n: usize) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.j == j && a.h_mode == h_mode && a.n == n)
    }
}

impl StudyConfig {
    /// `(j, h mode, n)` in output order.
    pub fn arms(&self) -> Vec<(u8, HMode, usize)> {
        let mut out = Vec::new();
        for &j in &self.dgps {
            for &m in &self.h_modes {
                for &n in &self.n_grid {
                    out.push((j, m, n));
                }
            }
        }
        out
    }
}

fn run_replicate(cfg: &StudyConfig, b: usize) -> ReplicateOutcome {
    let mut out = ReplicateOutcome::default();
    let arms = cfg.arms();
    let psi_0 = PSI_C_REFERENCE;
    let est_cfg = ContinuousConfig {
        alpha: cfg.alpha,
        ..cfg.continuous.clone()
    };
    for (jdx, &j) in cfg.dgps.iter().enumerate() {
        let spec = DgpSpec::new(j).expect("validated");
        let mut data_rng = replicate_stream(cfg.seed, b as u64, Purpose::Data, u64::from(j));
        let ds = match generate_dataset(&spec, cfg.big_n, &mut data_rng) {
            Ok(ds) => ds,
            Err(e) => {
                for a in arms.iter().filter(|a| a.0 == j) {
                    let _ = a;
                    out.arms.push(Err(e.to_string()));
                }
                out.h_opt.push(None);
                out.clipped.push(0);
                continue;
            }
        };
        out.clipped.push(ds.clipped());
        let pilot = if cfg.h_modes.contains(&HMode::Pilot) {
            let mut rng = replicate_stream(cfg.seed, b as u64, Purpose::Pilot, u64::from(j));
            let pc = PilotConfig {
                floor: cfg.floor,
                design: cfg.design,
                continuous: est_cfg.clone(),
                ..PilotConfig::new(cfg.n0, EstimatorKind::Continuous)
            };
            Some(run_pilot(&ds, &pc, &mut rng).map_err(|e| e.to_string()))
        } else {
            None
        };
        out.h_opt.push(match &pilot {
            Some(Ok(p)) => Some(p.h_opt.values().to_vec()),
            _ => None,
        });
        for (mdx, &mode) in cfg.h_modes.iter().enumerate() {
            for (ndx, &n) in cfg.n_grid.iter().enumerate() {
                let slot = ((jdx * 4 + mdx) * 64 + ndx) as u64;
                let mut rng = replicate_stream(cfg.seed, b as u64, Purpose::MainDraw, slot);
                let result = (|| -> std::result::Result<ArmEstimate, String> {
                    let (h, plan) = match mode {
                        HMode::Uniform => {
                            let h = SamplingFunction::uniform(3);
                            let plan = make_plan(&ds, &h, n).map_err(|e| e.to_string())?;
                            (h, plan)
                        }
                        HMode::Pilot => {
                            let p = pilot.as_ref().expect("pilot ran").as_ref().map_err(|e| e.clone())?;
                            let plan = make_plan_excluding(&ds, &p.h_opt, n, &p.pilot_indices)
                                .map_err(|e| e.to_string())?;
                            (p.h_opt.clone(), plan)
                        }
                    };
                    let draw = draw_fixed_size(&plan, cfg.design, &mut rng, DEFAULT_MAX_ATTEMPTS);
                    let sample = WeightedSample::new(&ds, draw).map_err(|e| e.to_string())?;
                    let r = estimate_continuous(&sample, &h, &est_cfg).map_err(|e| e.to_string())?;
                    Ok(ArmEstimate {
                        psi: r.psi,
                        sigma_n: r.sigma_n,
                        gamma_n: r.gamma_n,
                        covers: r.covers(psi_0),
                        converged: r.converged,
                    })
                })();
                out.arms.push(result);
            }
        }
    }
    out
}

/// Jarque–Bera p-value, or `NaN` below 20 estimates.
pub fn normality_diagnostic(estimates: &[f64]) -> Result<NormalityTest> {
    jarque_bera(estimates)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Runs every replicate on the current rayon pool and aggregates in
/// replicate order, so the result does not depend on the number of threads.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyMetrics> {
    cfg.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| run_replicate(cfg, b))
        .collect();
    aggregate(cfg, &outcomes)
}

fn aggregate(cfg: &StudyConfig, outcomes: &[ReplicateOutcome]) -> Result<StudyMetrics> {
    let psi_0 = PSI_C_REFERENCE;
    let mut arms = Vec::new();
    for (idx, &(j, h_mode, n)) in cfg.arms().iter().enumerate() {
        let mut ests = Vec::new();
        let mut failures = 0;
        let mut first_error = None;
        for o in outcomes {
            match &o.arms[idx] {
                Ok(e) => ests.push(*e),
                Err(msg) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| msg.clone());
                }
            }
        }
        let rate = failures as f64 / outcomes.len() as f64;
        if rate > cfg.max_failure_rate {
            return Err(Error::NonConvergence(format!(
                "arm j={j}, h={h_mode}, n={n}: {failures} of {} replicates failed (first: {})",
                outcomes.len(),
                first_error.unwrap_or_default()
            )));
        }
        if failures > 0 {
            log::warn!("arm j={j}, h={h_mode}, n={n}: {failures} failed replicates excluded");
        }
        let m = ests.len() as f64;
        let psis: Vec<f64> = ests.iter().map(|e| e.psi).collect();
        let mean = psis.iter().sum::<f64>() / m;
        let mean_sq = psis.iter().map(|p| p * p).sum::<f64>() / m;
        let jb = jarque_bera(&psis).map(|t| t.p_value).unwrap_or(f64::NAN);
        arms.push(ArmMetrics {
            j,
            h_mode,
            n,
            bias: psis.iter().map(|p| (p - psi_0).abs()).sum::<f64>() / m,
            mean_error: mean - psi_0,
            jb_p_value: jb,
            coverage: ests.iter().filter(|e| e.covers).count() as f64 / m,
            n_var: n as f64 * (mean_sq - mean * mean).max(0.0),
            mean_sigma_n: ests.iter().map(|e| e.sigma_n).sum::<f64>() / m,
            replicates: ests.len(),
            failures,
            not_converged: ests.iter().filter(|e| !e.converged).count(),
        });
    }
    let mut pilots = Vec::new();
    let mut clipped_fraction = Vec::new();
    for (jdx, &j) in cfg.dgps.iter().enumerate() {
        let clipped: f64 = outcomes.iter().map(|o| o.clipped[jdx] as f64).sum();
        clipped_fraction.push((j, clipped / (outcomes.len() * cfg.big_n) as f64));
        let hs: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.h_opt[jdx].as_ref()).collect();
        if hs.is_empty() {
            continue;
        }
        let h_median = (0..hs[0].len())
            .map(|v| median(&mut hs.iter().map(|h| h[v]).collect::<Vec<_>>()))
            .collect();
        pilots.push(PilotSummary {
            j,
            h_median,
            h_first: hs[0].clone(),
        });
    }
    Ok(StudyMetrics {
        psi_0,
        big_n: cfg.big_n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        arms,
        pilots,
        clipped_fraction,
    })
}
