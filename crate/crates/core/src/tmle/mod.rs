//! Targeted minimum-loss estimation on an HT-weighted sub-sample.

pub mod binary;
pub mod continuous;

use serde::{Deserialize, Serialize};

use crate::data::{DesignKind, OutcomeScale, SamplingFunction, StratumId, WeightedSample};
use crate::error::{Error, Result};
use crate::glm::GlmModel;
use crate::stats::normal_quantile;

pub use binary::{estimate_binary, fluctuate_binary, influence_b, BinaryConfig, BinaryNuisance};
pub use continuous::{
    estimate_continuous, influence_c, psi_c_ratio, ContinuousConfig, ContinuousNuisance, Evaluation,
};

/// A conditional mean or probability `(a, w, v) ↦ value`.
pub trait Regression: Send + Sync {
    fn eval(&self, a: f64, w: &[f64], v: StratumId) -> f64;
}

impl Regression for GlmModel {
    fn eval(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        self.predict(a, w, v)
    }
}

/// Adapts a closure, e.g. a known nuisance in a test world.
pub struct FnRegression<F>(pub F);

impl<F> Regression for FnRegression<F>
where
    F: Fn(f64, &[f64], StratumId) -> f64 + Send + Sync,
{
    fn eval(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        (self.0)(a, w, v)
    }
}

/// Which variable-importance parameter a report is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Binary,
    Continuous,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Binary => "binary",
            EstimatorKind::Continuous => "continuous",
        })
    }
}

/// Why the targeting loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The logistic fluctuation solves its score equation in one step.
    OneStep,
    /// The HT mean of the influence curve fell below the score tolerance.
    Score,
    /// The estimate moved less than the step tolerance.
    PsiStep,
    /// The optimal fluctuation was `t = 0`.
    Stationary,
    MaxIter,
}

/// State after each targeting step (step 0 is the initial fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step: usize,
    /// Fluctuation that produced this state; 0 for the initial fit.
    pub t: f64,
    pub psi: f64,
    /// HT mean of the influence curve.
    pub score: f64,
    pub sigma_n: f64,
    /// Cumulative HT log-likelihood ratio of the fluctuations so far.
    pub log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta2: Option<f64>,
}

/// Point estimate, variance and confidence interval of a TMLE run.
///
/// Fields without a `_scaled` suffix are in original outcome units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmleReport {
    pub estimator: EstimatorKind,
    pub psi: f64,
    pub sigma_n: f64,
    pub gamma_n: f64,
    pub ci: [f64; 2],
    pub half_width: f64,
    pub alpha: f64,
    pub psi_scaled: f64,
    pub sigma_n_scaled: f64,
    /// HT mean of the influence curve at the final fit (unit outcome scale).
    pub score_residual: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub design: DesignKind,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub outcome_scale: OutcomeScale,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta2_0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta2_star: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl TmleReport {
    pub fn ci_level(&self) -> f64 {
        1.0 - self.alpha
    }

    /// Whether the interval covers `value` (original units).
    pub fn covers(&self, value: f64) -> bool {
        self.ci[0] <= value && value <= self.ci[1]
    }
}

/// Inputs to [`finish_report`], all on the unit outcome scale.
pub(crate) struct ReportParts {
    pub estimator: EstimatorKind,
    pub psi: f64,
    pub sigma_n: f64,
    pub gamma_n: f64,
    pub score: f64,
    pub alpha: f64,
    pub n: usize,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub zeta2_0: Option<f64>,
    pub zeta2_star: Option<f64>,
    pub warnings: Vec<String>,
}

/// Half-width `ξ_{1-α/2} √Σ / ((1 - Γ) √n)`.
pub fn ci_half_width(sigma_n: f64, gamma_n: f64, n: usize, alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0) * sigma_n.max(0.0).sqrt() / ((1.0 - gamma_n) * (n as f64).sqrt())
}

pub(crate) fn finish_report(sample: &WeightedSample<'_>, parts: ReportParts) -> TmleReport {
    let scale = sample.dataset().outcome_scale();
    let half = ci_half_width(parts.sigma_n, parts.gamma_n, parts.n, parts.alpha);
    let psi = scale.unscale_effect(parts.psi);
    let half_o = scale.unscale_effect(half);
    let unscale_trace = |mut r: IterationRecord| {
        r.psi = scale.unscale_effect(r.psi);
        r.sigma_n = scale.unscale_variance(r.sigma_n);
        r
    };
    TmleReport {
        estimator: parts.estimator,
        psi,
        sigma_n: scale.unscale_variance(parts.sigma_n),
        gamma_n: parts.gamma_n,
        ci: [psi - half_o, psi + half_o],
        half_width: half_o,
        alpha: parts.alpha,
        psi_scaled: parts.psi,
        sigma_n_scaled: parts.sigma_n,
        score_residual: parts.score,
        n: parts.n,
        big_n: sample.big_n(),
        design: sample.design(),
        iterations: parts.iterations,
        stop_reason: parts.stop_reason,
        converged: parts.converged,
        trace: parts.trace.into_iter().map(unscale_trace).collect(),
        outcome_scale: scale,
        zeta2_0: parts.zeta2_0,
        zeta2_star: parts.zeta2_star,
        warnings: parts.warnings,
    }
}

/// Design size `n` implied by `pᵢ = n h(Vᵢ)/N`, read off an unclipped unit.
/// Falls back to `|S|`.
pub fn nominal_n(sample: &WeightedSample<'_>, h: &SamplingFunction) -> usize {
    let big_n = sample.big_n() as f64;
    for (o, &p) in sample.iter().zip(sample.probabilities()) {
        if p > crate::design::CLIP_EPS && p < 1.0 - crate::design::CLIP_EPS {
            return (big_n * p / h.eval(o.v)).round() as usize;
        }
    }
    sample.len()
}

/// `Σₙ = P^p D² h⁻¹` from per-unit influence values.
pub(crate) fn substitution_variance(sample: &WeightedSample<'_>, d: &[f64], h: &SamplingFunction) -> f64 {
    let vals: Vec<f64> = sample.iter().zip(d).map(|(o, x)| x * x / h.eval(o.v)).collect();
    sample.ht_integral_values(&vals)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub(crate) fn check_h(sample: &WeightedSample<'_>, h: &SamplingFunction) -> Result<()> {
    if h.len() != sample.dataset().strata().len() {
        return Err(Error::InvalidInput(format!(
            "sampling function covers {} strata, data set has {}",
            h.len(),
            sample.dataset().strata().len()
        )));
    }
    Ok(())
}
