//! Built-in oracle battery.

use serde::Serialize;

use crate::data::{SamplingFunction, WeightedSample};
use crate::design::{exact_rejective_design, make_plan, rejective_sample, InclusionPlan};
use crate::error::Result;
use crate::functional::{
    psi_c_least_squares, random_measure, remainder_b_closed, remainder_b_enumerated, remainder_c_closed,
    remainder_c_enumerated,
};
use crate::rng::{stream, StreamRng};
use crate::sim::{generate_dataset, true_psi_c_monte_carlo, DgpSpec, PSI_C_REFERENCE};
use crate::stats::chi_square_gof;
use crate::tmle::binary::{estimate_binary_with, BinaryOverrides};
use crate::tmle::continuous::estimate_continuous_with;
use crate::tmle::{influence_c, BinaryConfig, ContinuousConfig, FnRegression};
use crate::worlds::logistic_world;

/// Grid oracles must agree with the solvers to this accuracy.
pub const T_TOLERANCE: f64 = 1e-4;
/// Step of the fine grid searches.
pub const GRID_STEP: f64 = 1e-5;
pub const PSI_MC_TOLERANCE: f64 = 0.002;

#[derive(Debug, Clone)]
pub struct ValidateConfig {
    pub seed: u64,
    /// Score tolerance handed to the binary fluctuation under test.
    pub fluctuation_tol: f64,
    pub rejective_draws: usize,
    pub mc_draws: usize,
    pub measures: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            fluctuation_tol: BinaryConfig::default().score_tol,
            rejective_draws: 100_000,
            mc_draws: 1_000_000,
            measures: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every check. Errors are reported as failed checks rather than returned.
pub fn run_validation(cfg: &ValidateConfig) -> ValidationReport {
    type Oracle = fn(&ValidateConfig) -> Result<Check>;
    let oracles: [(&str, Oracle); 8] = [
        ("rejective_vs_enumeration", rejective_vs_enumeration),
        ("inclusion_sums", inclusion_sums),
        ("psi_ratio_vs_least_squares", psi_ratio_vs_least_squares),
        ("remainder_binary", remainder_binary),
        ("remainder_continuous", remainder_continuous),
        ("binary_fluctuation_grid", binary_fluctuation_grid),
        ("continuous_fluctuation_grid", continuous_fluctuation_grid),
        ("psi_c_monte_carlo", psi_c_monte_carlo),
    ];
    let checks = oracles
        .iter()
        .map(|(name, f)| {
            let c = f(cfg).unwrap_or_else(|e| check(name, false, format!("error: {e}")));
            log::info!("{}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            c
        })
        .collect();
    ValidationReport { checks }
}

fn rejective_vs_enumeration(cfg: &ValidateConfig) -> Result<Check> {
    let p = vec![0.9, 0.7, 0.5, 0.4, 0.3, 0.2];
    let exact = exact_rejective_design(&p, 3)?;
    let plan = InclusionPlan::from_probabilities(p, 3)?;
    let mut rng = stream(cfg.seed, 101);
    let mut counts = vec![0u64; exact.subsets.len()];
    for _ in 0..cfg.rejective_draws {
        let d = rejective_sample(&plan, &mut rng, 10_000)?;
        let mut units = d.units;
        units.sort_unstable();
        let k = exact
            .subsets
            .iter()
            .position(|(s, _)| *s == units)
            .expect("draw has size n");
        counts[k] += 1;
    }
    let probs: Vec<f64> = exact.subsets.iter().map(|(_, w)| *w).collect();
    let gof = chi_square_gof(&counts, &probs)?;
    Ok(check(
        "rejective_vs_enumeration",
        gof.p_value > 0.001,
        format!("chi2 = {:.2} on {} dof, p = {:.4}", gof.statistic, gof.dof, gof.p_value),
    ))
}

fn inclusion_sums(_cfg: &ValidateConfig) -> Result<Check> {
    let exact = exact_rejective_design(&[0.9, 0.7, 0.5, 0.4, 0.3, 0.2], 3)?;
    let exact_err = (exact.inclusion.iter().sum::<f64>() - 3.0).abs();
    let ds = logistic_world(7, 5000);
    let h = SamplingFunction::new(vec![0.4, 1.6])?.normalized(&ds);
    let plan = make_plan(&ds, &h, 400)?;
    let plan_err = (plan.probabilities().iter().sum::<f64>() - 400.0).abs();
    Ok(check(
        "inclusion_sums",
        exact_err < 1e-12 && plan_err < 1e-8,
        format!("|sum pi - n| = {exact_err:.1e} (exact), {plan_err:.1e} (plan)"),
    ))
}

fn psi_ratio_vs_least_squares(cfg: &ValidateConfig) -> Result<Check> {
    let mut rng = stream(cfg.seed, 102);
    let mut worst = 0.0f64;
    for _ in 0..cfg.measures {
        let p = random_measure(&mut rng, &[0.0, 1.0], &[0.0, 0.5, 2.0]);
        worst = worst.max((p.psi_c()? - psi_c_least_squares(&p)?).abs());
    }
    Ok(check(
        "psi_ratio_vs_least_squares",
        worst <= 1e-10,
        format!("max difference {worst:.1e} over {} measures", cfg.measures),
    ))
}

fn remainder(
    cfg: &ValidateConfig,
    name: &str,
    slot: u64,
    ws: &[f64],
    exposures: &[f64],
    f: fn(&crate::functional::DiscreteMeasure, &crate::functional::DiscreteMeasure) -> Result<(f64, f64)>,
) -> Result<Check> {
    let mut rng: StreamRng = stream(cfg.seed, slot);
    let mut worst = 0.0f64;
    for _ in 0..cfg.measures {
        let p = random_measure(&mut rng, ws, exposures);
        let q = random_measure(&mut rng, ws, exposures);
        let (a, b) = f(&p, &q)?;
        worst = worst.max((a - b).abs());
    }
    Ok(check(
        name,
        worst <= 1e-10,
        format!("max |enumerated - closed form| = {worst:.1e}"),
    ))
}

fn remainder_binary(cfg: &ValidateConfig) -> Result<Check> {
    remainder(cfg, "remainder_binary", 103, &[0.0, 1.0, 2.0], &[0.0, 1.0], |p, q| {
        Ok((remainder_b_enumerated(p, q)?, remainder_b_closed(p, q)?))
    })
}

fn remainder_continuous(cfg: &ValidateConfig) -> Result<Check> {
    remainder(cfg, "remainder_continuous", 104, &[0.0, 1.0], &[0.0, 0.7, 1.9], |p, q| {
        Ok((remainder_c_enumerated(p, q)?, remainder_c_closed(p, q)?))
    })
}

/// Coarse-to-fine grid search for the maximizer of `f` on `[lo, hi]`.
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let coarse_step = 1e-3;
    let m = ((hi - lo) / coarse_step).ceil() as i64;
    let by = |a: &f64, b: &f64| f(*a).total_cmp(&f(*b));
    let coarse = (0..=m)
        .map(|i| (lo + i as f64 * coarse_step).min(hi))
        .max_by(by)
        .unwrap_or(lo);
    let k = (coarse_step / GRID_STEP).round() as i64;
    (-k..=k)
        .map(|i| (coarse + i as f64 * GRID_STEP).clamp(lo, hi))
        .max_by(by)
        .unwrap_or(coarse)
}

fn binary_fluctuation_grid(cfg: &ValidateConfig) -> Result<Check> {
    let ds = logistic_world(cfg.seed, 2000);
    let h = SamplingFunction::new(vec![0.7, 1.3])?.normalized(&ds);
    let plan = make_plan(&ds, &h, 200)?;
    let mut rng = stream(cfg.seed, 105);
    let s = WeightedSample::new(&ds, rejective_sample(&plan, &mut rng, 10_000)?)?;
    let bcfg = BinaryConfig {
        score_tol: cfg.fluctuation_tol,
        ..BinaryConfig::default()
    };
    // A deliberately poor initial Q so that the targeting step is substantial.
    let overrides = BinaryOverrides {
        q: Some(Box::new(FnRegression(|a: f64, _: &[f64], _| 0.5 - 0.3 * a))),
        g: None,
    };
    let est = estimate_binary_with(&s, &h, &bcfg, overrides)?;
    let nu = &est.nuisance;
    let w = s.ht_weights();
    let neg_risk = |t: f64| -> f64 {
        -s.iter()
            .zip(&w)
            .map(|(o, wi)| wi * crate::glm::logistic_loss(o.y, nu.q_at(t, o.a, o.w, o.v)))
            .sum::<f64>()
    };
    let t_grid = grid_argmax(neg_risk, -5.0, 5.0);
    let t = est.fluctuation.t;
    Ok(check(
        "binary_fluctuation_grid",
        (t - t_grid).abs() < T_TOLERANCE,
        format!("t = {t:.6}, grid = {t_grid:.6}, score tolerance {:.0e}", cfg.fluctuation_tol),
    ))
}

fn continuous_fluctuation_grid(cfg: &ValidateConfig) -> Result<Check> {
    let spec = DgpSpec::new(1)?;
    let mut rng = stream(cfg.seed, 106);
    let ds = generate_dataset(&spec, 20_000, &mut rng)?;
    let h = SamplingFunction::uniform(ds.strata().len());
    let plan = make_plan(&ds, &h, 500)?;
    let s = WeightedSample::new(&ds, rejective_sample(&plan, &mut rng, 10_000)?)?;
    let one = ContinuousConfig {
        max_iter: 1,
        mic: 0.0,
        psi_tol: 0.0,
        ..ContinuousConfig::default()
    };
    let zero = ContinuousConfig {
        max_iter: 0,
        ..one.clone()
    };
    let est0 = estimate_continuous_with(&s, &h, &zero, Default::default())?;
    let d: Vec<f64> = s
        .iter()
        .map(|o| influence_c(&est0.nuisance, est0.nuisance.psi, o))
        .collect();
    let d1: Vec<f64> = s.iter().map(|o| est0.nuisance.influence_parts(o).0).collect();
    let est1 = estimate_continuous_with(&s, &h, &one, Default::default())?;
    let t = est1.nuisance.t_history.first().copied().unwrap_or(0.0);
    let sup = d.iter().chain(&d1).fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = one.t_margin / sup;
    let w = s.ht_weights();
    let ll = |t: f64| -> f64 {
        w.iter()
            .zip(&d)
            .map(|(w, d)| {
                let u = 1.0 + t * d;
                if u > 0.0 {
                    w * u.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    };
    let t_grid = grid_argmax(ll, -bound, bound);
    Ok(check(
        "continuous_fluctuation_grid",
        (t - t_grid).abs() < T_TOLERANCE,
        format!("t = {t:.6}, grid = {t_grid:.6}"),
    ))
}

fn psi_c_monte_carlo(cfg: &ValidateConfig) -> Result<Check> {
    let spec = DgpSpec::new(1)?;
    let mc = true_psi_c_monte_carlo(&spec, cfg.mc_draws, cfg.seed);
    Ok(check(
        "psi_c_monte_carlo",
        (mc - PSI_C_REFERENCE).abs() <= PSI_MC_TOLERANCE,
        format!("{} draws give {mc:.5}; reference {PSI_C_REFERENCE}", cfg.mc_draws),
    ))
}
