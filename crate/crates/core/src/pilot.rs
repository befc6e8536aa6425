//! Pilot-based choice of the sampling function.
//!
//! A uniform pilot of `n₀` units gives an influence curve `f₁`; per stratum
//! `f₂(v) = √E[f₁² | V = v]`, and the variance-optimal design samples with
//! `h ∝ f₂`.

use rand::Rng;
use serde::Serialize;

use crate::data::{Dataset, SamplingFunction, StratumId, WeightedSample};
use crate::design::{draw_fixed_size, make_plan, FixedSizeDesign, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::tmle::{
    binary::estimate_binary_with, continuous::estimate_continuous_with, influence_b, BinaryConfig,
    ContinuousConfig, EstimatorKind, TmleReport,
};

/// Lower bound `c_h` on the optimized sampling function.
pub const DEFAULT_H_FLOOR: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub n0: usize,
    pub estimator: EstimatorKind,
    pub floor: f64,
    pub design: FixedSizeDesign,
    pub max_attempts: usize,
    pub binary: BinaryConfig,
    pub continuous: ContinuousConfig,
}

impl PilotConfig {
    pub fn new(n0: usize, estimator: EstimatorKind) -> Self {
        Self {
            n0,
            estimator,
            floor: DEFAULT_H_FLOOR,
            design: FixedSizeDesign::Rejective,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            binary: BinaryConfig::default(),
            continuous: ContinuousConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PilotResult {
    pub f2_by_stratum: Vec<f64>,
    pub pi2_hat: f64,
    pub h_opt: SamplingFunction,
    /// Units drawn by the pilot, sorted; the main draw must avoid them.
    pub pilot_indices: Vec<usize>,
    /// Strata without pilot units, whose `f₂` was imputed by the pooled value.
    pub imputed: Vec<StratumId>,
    pub report: TmleReport,
}

/// `Σᵥ P(v) f₂(v)² / h(v)`.
pub fn asymptotic_variance(f2: &[f64], probs: &[f64], h: &SamplingFunction) -> f64 {
    f2.iter()
        .zip(probs)
        .enumerate()
        .map(|(v, (f, p))| p * f * f / h.eval(v as StratumId))
        .sum()
}

/// `h = max(λ f₂, c)` with `λ` chosen so that `Σᵥ P(v) h(v) = 1`.
///
/// Strata of probability zero get `h = 1`.
pub fn optimal_h(f2: &[f64], probs: &[f64], floor: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidInput(format!("floor c_h must lie in (0, 1), got {floor}")));
    }
    if f2.len() != probs.len() {
        return Err(Error::InvalidInput("one f2 value per stratum required".into()));
    }
    let pi2: f64 = f2.iter().zip(probs).map(|(f, p)| f * p).sum();
    if !(pi2 > 0.0) {
        return Ok(vec![1.0; f2.len()]);
    }
    let mean = |lambda: f64| -> f64 {
        f2.iter()
            .zip(probs)
            .map(|(f, p)| p * (lambda * f / pi2).max(floor))
            .sum()
    };
    // mean(λ) is continuous and non-decreasing; mean(0) = c < 1 and mean(1) ≥ 1.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h: Vec<f64> = f2
        .iter()
        .zip(probs)
        .map(|(f, &p)| if p > 0.0 { (hi * f / pi2).max(floor) } else { 1.0 })
        .collect();
    let m: f64 = h.iter().zip(probs).map(|(h, p)| h * p).sum();
    Ok(h.into_iter().map(|x| x / m).collect())
}

/// Draws a uniform pilot, estimates `f₂` by stratum and returns the
/// floored optimal sampling function normalized to mean 1 over `dataset`.
pub fn run_pilot<R: Rng + ?Sized>(dataset: &Dataset, cfg: &PilotConfig, rng: &mut R) -> Result<PilotResult> {
    let k = dataset.strata().len();
    let h0 = SamplingFunction::uniform(k);
    let plan = make_plan(dataset, &h0, cfg.n0)?;
    let draw = draw_fixed_size(&plan, cfg.design, rng, cfg.max_attempts);
    let sample = WeightedSample::new(dataset, draw)?;

    let (report, f1): (TmleReport, Vec<f64>) = match cfg.estimator {
        EstimatorKind::Binary => {
            let est = estimate_binary_with(&sample, &h0, &cfg.binary, Default::default())?;
            let psi = est.report.psi_scaled;
            let f1 = sample.iter().map(|o| influence_b(&est.nuisance, psi, o)).collect();
            (est.report, f1)
        }
        EstimatorKind::Continuous => {
            let est = estimate_continuous_with(&sample, &h0, &cfg.continuous, Default::default())?;
            let f1 = sample
                .iter()
                .map(|o| {
                    let (d1, d2) = est.nuisance.influence_parts(o);
                    d1 + d2
                })
                .collect();
            (est.report, f1)
        }
    };

    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (o, d) in sample.iter().zip(&f1) {
        sums[o.v as usize] += d * d;
        counts[o.v as usize] += 1;
    }
    let pooled = (f1.iter().map(|d| d * d).sum::<f64>() / f1.len() as f64).sqrt();
    let mut imputed = Vec::new();
    let f2: Vec<f64> = (0..k)
        .map(|v| {
            if counts[v] == 0 {
                imputed.push(v as StratumId);
                pooled
            } else {
                (sums[v] / counts[v] as f64).sqrt()
            }
        })
        .collect();
    if !imputed.is_empty() {
        log::warn!("pilot has no units in strata {imputed:?}; using the pooled f2 there");
    }
    let probs = dataset.stratum_frequencies();
    let pi2_hat = f2.iter().zip(&probs).map(|(f, p)| f * p).sum();
    let h_opt = SamplingFunction::with_floor(optimal_h(&f2, &probs, cfg.floor)?, cfg.floor)?;
    let mut pilot_indices = sample.units().to_vec();
    pilot_indices.sort_unstable();
    Ok(PilotResult {
        f2_by_stratum: f2,
        pi2_hat,
        h_opt,
        pilot_indices,
        imputed,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn uniform_h_gives_second_moment() {
        let f2 = [1.0, 2.0, 3.0];
        let p = [0.2, 0.3, 0.5];
        let v = asymptotic_variance(&f2, &p, &SamplingFunction::uniform(3));
        assert!((v - (0.2 + 1.2 + 4.5)).abs() < 1e-14);
    }

    #[test]
    fn optimum_attains_the_squared_mean() {
        let f2 = [1.0, 2.0, 3.0];
        let p = [0.2, 0.3, 0.5];
        let h = SamplingFunction::new(optimal_h(&f2, &p, 0.01).unwrap()).unwrap();
        let pi2: f64 = 0.2 + 0.6 + 1.5;
        assert!((asymptotic_variance(&f2, &p, &h) - pi2 * pi2).abs() < 1e-12);
    }

    #[test]
    fn grid_search_finds_the_optimum() {
        let f2 = [0.5, 2.0, 1.2];
        let p = [1.0 / 6.0, 1.0 / 3.0, 0.5];
        let exact = optimal_h(&f2, &p, 1e-6).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let step = 1e-3;
        // h₃ is fixed by the mean-one constraint.
        for i in 1..6000 {
            let h1 = i as f64 * step;
            for j in 1..3000 {
                let h2 = j as f64 * step;
                let rest = 1.0 - p[0] * h1 - p[1] * h2;
                if rest <= 0.0 {
                    break;
                }
                let h3 = rest / p[2];
                let v = p[0] * f2[0] * f2[0] / h1 + p[1] * f2[1] * f2[1] / h2 + p[2] * f2[2] * f2[2] / h3;
                if v < best.0 {
                    best = (v, h1, h2);
                }
            }
        }
        assert!((best.1 - exact[0]).abs() <= 2.0 * step);
        assert!((best.2 - exact[1]).abs() <= 2.0 * step);
    }

    #[test]
    fn random_designs_never_beat_the_optimum() {
        let f2 = [0.3, 1.7, 0.9, 2.2];
        let p = [0.1, 0.2, 0.3, 0.4];
        let opt = SamplingFunction::new(optimal_h(&f2, &p, 1e-9).unwrap()).unwrap();
        let best = asymptotic_variance(&f2, &p, &opt);
        let mut rng = stream(1, 0);
        let u = Uniform::new(0.01, 5.0).unwrap();
        for _ in 0..10_000 {
            let raw: Vec<f64> = (0..4).map(|_| u.sample(&mut rng)).collect();
            let m: f64 = raw.iter().zip(&p).map(|(h, p)| h * p).sum();
            let h = SamplingFunction::new(raw.iter().map(|x| x / m).collect()).unwrap();
            assert!(asymptotic_variance(&f2, &p, &h) >= best - 1e-12);
        }
    }

    #[test]
    fn floor_is_respected_with_unit_mean() {
        let f2 = [0.0, 1.0, 10.0];
        let p = [0.5, 0.3, 0.2];
        let h = optimal_h(&f2, &p, 0.05).unwrap();
        assert!(h.iter().all(|&x| x >= 0.05 - 1e-12), "{h:?}");
        let m: f64 = h.iter().zip(&p).map(|(h, p)| h * p).sum();
        assert!((m - 1.0).abs() < 1e-12);
        assert!((h[0] - 0.05).abs() < 1e-9);
        // Unfloored strata stay proportional to f₂.
        assert!((h[2] / h[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn homoscedastic_pilot_is_near_uniform() {
        // Strata assigned independently of the data.
        let ds = crate::worlds::logistic_world_with(11, 40_000, 3, |_, u| (3.0 * u) as StratumId);
        let mut rng = stream(12, 0);
        let cfg = PilotConfig::new(4000, EstimatorKind::Binary);
        let r = run_pilot(&ds, &cfg, &mut rng).unwrap();
        for &h in r.h_opt.values() {
            assert!((h - 1.0).abs() < 0.1, "{:?}", r.h_opt.values());
        }
        assert!((r.h_opt.mean_over(&ds) - 1.0).abs() < 1e-12);
        assert_eq!(r.pilot_indices.len(), 4000);
        assert!(r.pilot_indices.windows(2).all(|p| p[0] < p[1]));
        assert!(r.imputed.is_empty());
    }
}
