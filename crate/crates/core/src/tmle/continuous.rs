//! TMLE of the continuous-exposure variable importance
//!
//! ```text
//! ψᶜ(P) = argmin_β E_P[(Q(A,W) - Q(0,W) - βA)²] = E_P[A(Q(A,W) - Q(0,W))] / E_P[A²].
//! ```
//!
//! The working measure `Pᵏ` lives on the sampled atoms `(Wᵢ, Aᵢ)` with HT
//! masses. Each targeting step fluctuates it along
//! `dPᵏ(t)/dPᵏ = 1 + t Dᶜ(Pᵏ)`, with `t` the HT-weighted maximum likelihood
//! estimate. Under that fluctuation
//!
//! * the `(A, W)` marginal is reweighted by `1 + t D₁ᶜ`, since `D₂ᶜ` has
//!   conditional mean zero;
//! * the outcome regression moves in closed form,
//!   `Q_t = Q + t σ²(A - μ 1{A=0}/g) / (ζ² (1 + t D₁ᶜ))`, where `σ²` is the
//!   conditional variance of `Y`;
//! * `μ` and `g(0|·)` are refit on the reweighted atoms.
//!
//! The fitted `Q` of every step is kept as a function of `(a, w)` so that it
//! can be evaluated off the atoms, which Monte Carlo evaluation needs.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{
    check_alpha, check_h, ci_half_width, finish_report, nominal_n, substitution_variance, EstimatorKind,
    IterationRecord, Regression, ReportParts, StopReason, TmleReport,
};
use crate::data::{ExposureKind, ObsRef, SamplingFunction, StratumId, WeightedSample};
use crate::error::{Error, Result};
use crate::glm::{
    fit_g0_continuous, fit_mu, fit_q, fit_sigma2, FeatureMap, GlmModel, GlmOptions, DEFAULT_G_MIN, Q_BOUND,
};
use crate::sum::CompensatedSum;

/// Scores below this count as zero whatever `Σₙ` is.
const SCORE_FLOOR: f64 = 1e-12;

/// How `ψ*` is evaluated on the final working measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// Exact evaluation on the weighted atoms.
    Atoms,
    /// Average over `draws` simulated `(A, W)` pairs.
    MonteCarlo { draws: usize, seed: u64 },
}

/// Settings of [`estimate_continuous`].
#[derive(Debug, Clone)]
pub struct ContinuousConfig {
    pub alpha: f64,
    pub g_min: f64,
    /// Feature maps default to the usual terms plus stratum indicators.
    pub q_features: Option<FeatureMap>,
    pub mu_features: Option<FeatureMap>,
    pub g0_features: Option<FeatureMap>,
    pub sigma2_features: Option<FeatureMap>,
    pub glm: GlmOptions,
    pub max_iter: usize,
    /// Stop once `|P^p D| ≤ mic · √Σₙ/√n`.
    pub mic: f64,
    /// Stop once `|ψᵏ⁺¹ - ψᵏ| ≤ psi_tol ·` CI half-width.
    pub psi_tol: f64,
    /// `|t| ≤ t_margin / max(‖D‖∞, ‖D₁‖∞)` over the atoms.
    pub t_margin: f64,
    pub evaluation: Evaluation,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            g_min: DEFAULT_G_MIN,
            q_features: None,
            mu_features: None,
            g0_features: None,
            sigma2_features: None,
            glm: GlmOptions::default(),
            max_iter: 7,
            mic: 0.01,
            psi_tol: 0.05,
            t_margin: 0.99,
            evaluation: Evaluation::Atoms,
        }
    }
}

/// `ψᶜ` of a discrete measure: `Σ mᵢ aᵢ (Q(aᵢ,wᵢ) - Q(0,wᵢ)) / Σ mᵢ aᵢ²`.
pub fn psi_c_ratio(mass: &[f64], a: &[f64], qa: &[f64], q0: &[f64]) -> Result<f64> {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for i in 0..mass.len() {
        num.add(mass[i] * a[i] * (qa[i] - q0[i]));
        den.add(mass[i] * a[i] * a[i]);
    }
    let den = den.value();
    if !(den > 0.0) {
        return Err(Error::InvalidInput(
            "second moment of the exposure is zero; the measure puts no mass on A ≠ 0".into(),
        ));
    }
    Ok(num.value() / den)
}

/// Normalized second moment `Σ mᵢ aᵢ² / Σ mᵢ`.
pub fn zeta2(mass: &[f64], a: &[f64]) -> f64 {
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (m, x) in mass.iter().zip(a) {
        num.add(m * x * x);
        den.add(*m);
    }
    num.value() / den.value()
}

/// Components `(D₁ᶜ, D₂ᶜ)` of the influence curve at one observation.
#[allow(clippy::too_many_arguments)]
pub fn influence_parts(
    a: f64,
    y: f64,
    qa: f64,
    q0: f64,
    mu: f64,
    g0: f64,
    psi: f64,
    zeta2: f64,
) -> (f64, f64) {
    let d1 = a * (qa - q0 - a * psi) / zeta2;
    let clever = if a == 0.0 { -mu / g0 } else { a };
    let d2 = (y - qa) * clever / zeta2;
    (d1, d2)
}

/// One targeting step, enough to replay the `Q` update anywhere.
#[derive(Clone)]
struct QStep {
    t: f64,
    psi: f64,
    zeta2: f64,
    mu: Arc<dyn Regression>,
    g0: Arc<dyn Regression>,
}

/// `Qᵏ(a, w)` as the initial regression followed by the targeting updates.
#[derive(Clone)]
pub struct QFunction {
    initial: Arc<dyn Regression>,
    sigma2: Arc<dyn Regression>,
    g_min: f64,
    steps: Vec<QStep>,
}

impl QFunction {
    fn sigma2_capped(&self, a: f64, w: &[f64], v: StratumId, q: f64) -> f64 {
        self.sigma2.eval(a, w, v).max(0.0).min(q * (1.0 - q))
    }

    fn apply(&self, step: &QStep, a: f64, w: &[f64], v: StratumId, qa: f64, q0: f64) -> (f64, f64) {
        let mu = step.mu.eval(0.0, w, v);
        let g = step.g0.eval(0.0, w, v).clamp(self.g_min, 1.0 - self.g_min);
        let s0 = self.sigma2_capped(0.0, w, v, q0);
        let new_q0 = (q0 - step.t * s0 * mu / (g * step.zeta2)).clamp(Q_BOUND, 1.0 - Q_BOUND);
        if a == 0.0 {
            return (new_q0, new_q0);
        }
        let d1 = a * (qa - q0 - a * step.psi) / step.zeta2;
        let denom = (1.0 + step.t * d1).max(1e-3);
        let sa = self.sigma2_capped(a, w, v, qa);
        let new_qa = (qa + step.t * sa * a / (step.zeta2 * denom)).clamp(Q_BOUND, 1.0 - Q_BOUND);
        (new_qa, new_q0)
    }

    fn initial_pair(&self, a: f64, w: &[f64], v: StratumId) -> (f64, f64) {
        let q0 = self.initial.eval(0.0, w, v).clamp(Q_BOUND, 1.0 - Q_BOUND);
        let qa = if a == 0.0 {
            q0
        } else {
            self.initial.eval(a, w, v).clamp(Q_BOUND, 1.0 - Q_BOUND)
        };
        (qa, q0)
    }

    /// `(Q(a, w), Q(0, w))` after all steps.
    pub fn eval_pair(&self, a: f64, w: &[f64], v: StratumId) -> (f64, f64) {
        let (mut qa, mut q0) = self.initial_pair(a, w, v);
        for step in &self.steps {
            (qa, q0) = self.apply(step, a, w, v, qa, q0);
        }
        (qa, q0)
    }

    pub fn eval(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        self.eval_pair(a, w, v).0
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }
}

/// Working measure `Pᵏ` and its nuisances.
pub struct ContinuousNuisance {
    pub q: QFunction,
    pub mu: Arc<dyn Regression>,
    pub g0: Arc<dyn Regression>,
    pub sigma2: Arc<dyn Regression>,
    pub g_min: f64,
    /// HT estimate of `E[A²]`.
    pub zeta2_0: f64,
    /// `ζ²(Pᵏ)`.
    pub zeta2_star: f64,
    /// `Ψᶜ(Pᵏ)`.
    pub psi: f64,
    /// Density ratio of the `(A, W)` marginal of `Pᵏ` to that of `P⁰`, per atom.
    pub ratio_weights: Vec<f64>,
    /// `Πₖ (1 + tᵏ Dᶜ(Pᵏ)(Oᵢ))` at the observed outcomes.
    pub likelihood_ratio: Vec<f64>,
    pub t_history: Vec<f64>,
    qa: Vec<f64>,
    q0: Vec<f64>,
}

impl ContinuousNuisance {
    /// `g(0 | w)` truncated to `[g_min, 1 - g_min]`.
    pub fn g0_of(&self, w: &[f64], v: StratumId) -> f64 {
        self.g0.eval(0.0, w, v).clamp(self.g_min, 1.0 - self.g_min)
    }

    /// `(D₁ᶜ, D₂ᶜ)` at an observation, with the current `ψ` and `ζ²`.
    pub fn influence_parts(&self, o: ObsRef<'_>) -> (f64, f64) {
        let (qa, q0) = self.q.eval_pair(o.a, o.w, o.v);
        influence_parts(
            o.a,
            o.y,
            qa,
            q0,
            self.mu.eval(0.0, o.w, o.v),
            self.g0_of(o.w, o.v),
            self.psi,
            self.zeta2_star,
        )
    }
}

/// `Dᶜ(o)` for the nuisance's current state and the given `ψ`.
pub fn influence_c(nuisance: &ContinuousNuisance, psi: f64, o: ObsRef<'_>) -> f64 {
    let (qa, q0) = nuisance.q.eval_pair(o.a, o.w, o.v);
    let (d1, d2) = influence_parts(
        o.a,
        o.y,
        qa,
        q0,
        nuisance.mu.eval(0.0, o.w, o.v),
        nuisance.g0_of(o.w, o.v),
        psi,
        nuisance.zeta2_star,
    );
    d1 + d2
}

/// Replacement nuisances for test worlds.
#[derive(Default, Clone)]
pub struct ContinuousOverrides {
    pub q: Option<Arc<dyn Regression>>,
    pub mu: Option<Arc<dyn Regression>>,
    pub g0: Option<Arc<dyn Regression>>,
    pub sigma2: Option<Arc<dyn Regression>>,
}

/// Initial fits, kept for inspection.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct InitialModels {
    pub q: Option<GlmModel>,
    pub mu: Option<GlmModel>,
    pub g0: Option<GlmModel>,
    pub sigma2: Option<GlmModel>,
}

/// Report plus the final working measure.
pub struct ContinuousEstimate {
    pub report: TmleReport,
    pub nuisance: ContinuousNuisance,
    pub initial: InitialModels,
}

/// Per-atom quantities of the current state.
struct StepState {
    d1: Vec<f64>,
    d: Vec<f64>,
    score: f64,
    sigma_n: f64,
}

struct Engine<'s, 'd> {
    sample: &'s WeightedSample<'d>,
    h: &'s SamplingFunction,
    w: Vec<f64>,
    a: Vec<f64>,
    range: (f64, f64),
    cfg: &'s ContinuousConfig,
    refit_mu: Option<FeatureMap>,
    refit_g0: Option<FeatureMap>,
    warnings: Vec<String>,
}

impl Engine<'_, '_> {
    fn mass(&self, nu: &ContinuousNuisance) -> Vec<f64> {
        self.w.iter().zip(&nu.ratio_weights).map(|(w, r)| w * r).collect()
    }

    fn refresh(&self, nu: &mut ContinuousNuisance) -> Result<StepState> {
        let mass = self.mass(nu);
        nu.psi = psi_c_ratio(&mass, &self.a, &nu.qa, &nu.q0)?;
        nu.zeta2_star = zeta2(&mass, &self.a);
        let mut d1 = Vec::with_capacity(self.w.len());
        let mut d = Vec::with_capacity(self.w.len());
        for (i, o) in self.sample.iter().enumerate() {
            let (p1, p2) = influence_parts(
                o.a,
                o.y,
                nu.qa[i],
                nu.q0[i],
                nu.mu.eval(0.0, o.w, o.v),
                nu.g0_of(o.w, o.v),
                nu.psi,
                nu.zeta2_star,
            );
            d1.push(p1);
            d.push(p1 + p2);
        }
        let score = self.sample.ht_integral_values(&d);
        let sigma_n = substitution_variance(self.sample, &d, self.h);
        Ok(StepState { d1, d, score, sigma_n })
    }

    /// `argmax_t Σ wᵢ log(1 + t Dᵢ)` over `|t| ≤ bound`.
    fn optimal_t(&self, d: &[f64], bound: f64) -> f64 {
        let deriv = |t: f64| -> (f64, f64) {
            let mut f1 = CompensatedSum::new();
            let mut f2 = CompensatedSum::new();
            for (wi, di) in self.w.iter().zip(d) {
                let u = 1.0 + t * di;
                f1.add(wi * di / u);
                f2.add(-wi * di * di / (u * u));
            }
            (f1.value(), f2.value())
        };
        let (s0, _) = deriv(0.0);
        if s0 == 0.0 {
            return 0.0;
        }
        let edge = s0.signum() * bound;
        let (s_edge, _) = deriv(edge);
        if s_edge.signum() == s0.signum() {
            return edge;
        }
        let (mut lo, mut hi) = (0.0, edge);
        let mut t = 0.0;
        let (mut s, mut ds) = (s0, deriv(0.0).1);
        let tol = 1e-13 * self.w.iter().zip(d).map(|(w, x)| w * x.abs()).sum::<f64>();
        for _ in 0..200 {
            let newton = t - s / ds;
            let inside = (newton - lo) * (newton - hi) < 0.0;
            t = if inside && ds < 0.0 { newton } else { 0.5 * (lo + hi) };
            (s, ds) = deriv(t);
            if s.abs() <= tol {
                break;
            }
            if s.signum() == s0.signum() {
                lo = t;
            } else {
                hi = t;
            }
            if (hi - lo).abs() <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
                break;
            }
        }
        t
    }

    /// Fluctuates `nu` along `1 + t Dᶜ`. Returns `(t, HT log-likelihood gain)`.
    fn step(&mut self, nu: &mut ContinuousNuisance, state: &StepState) -> Result<(f64, f64)> {
        let sup = state
            .d
            .iter()
            .chain(&state.d1)
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if sup == 0.0 {
            return Ok((0.0, 0.0));
        }
        let t = self.optimal_t(&state.d, self.cfg.t_margin / sup);
        if t == 0.0 {
            return Ok((0.0, 0.0));
        }
        let gain = crate::sum::sum(self.w.iter().zip(&state.d).map(|(w, d)| w * (1.0 + t * d).ln()));
        for i in 0..self.w.len() {
            nu.ratio_weights[i] *= 1.0 + t * state.d1[i];
            nu.likelihood_ratio[i] *= 1.0 + t * state.d[i];
        }
        let step = QStep {
            t,
            psi: nu.psi,
            zeta2: nu.zeta2_star,
            mu: nu.mu.clone(),
            g0: nu.g0.clone(),
        };
        for (i, o) in self.sample.iter().enumerate() {
            (nu.qa[i], nu.q0[i]) = nu.q.apply(&step, o.a, o.w, o.v, nu.qa[i], nu.q0[i]);
        }
        nu.q.steps.push(step);
        nu.t_history.push(t);

        let mass = self.mass(nu);
        if let Some(f) = &self.refit_mu {
            match fit_mu(self.sample, &mass, f.clone(), self.range, &self.cfg.glm) {
                Ok(m) => nu.mu = Arc::new(m),
                Err(e) => self.warnings.push(format!("mu refit skipped: {e}")),
            }
        }
        if let Some(f) = &self.refit_g0 {
            match fit_g0_continuous(self.sample, &mass, f.clone(), self.cfg.g_min, &self.cfg.glm) {
                Ok(m) => nu.g0 = Arc::new(m),
                Err(e) => self.warnings.push(format!("g0 refit skipped: {e}")),
            }
        }
        Ok((t, gain))
    }
}

/// TMLE of `ψᶜ` on a continuous-exposure sample drawn with sampling function `h`.
pub fn estimate_continuous(
    sample: &WeightedSample<'_>,
    h: &SamplingFunction,
    cfg: &ContinuousConfig,
) -> Result<TmleReport> {
    estimate_continuous_with(sample, h, cfg, ContinuousOverrides::default()).map(|e| e.report)
}

/// [`estimate_continuous`] with optional known nuisances, returning the
/// final working measure.
pub fn estimate_continuous_with(
    sample: &WeightedSample<'_>,
    h: &SamplingFunction,
    cfg: &ContinuousConfig,
    overrides: ContinuousOverrides,
) -> Result<ContinuousEstimate> {
    let ds = sample.dataset();
    let range = match ds.exposure() {
        ExposureKind::Continuous { lo, hi } => (lo, hi),
        ExposureKind::Binary => {
            return Err(Error::InvalidInput("continuous TMLE needs a continuous exposure".into()))
        }
    };
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    check_alpha(cfg.alpha)?;
    check_h(sample, h)?;
    if !sample.iter().any(|o| o.a == 0.0) {
        return Err(Error::Positivity("no unit with A = 0".into()));
    }
    if !sample.iter().any(|o| o.a != 0.0) {
        return Err(Error::Positivity("exposure is identically zero".into()));
    }
    let w = sample.ht_weights();
    let w_dim = ds.w_dim();
    let k = ds.strata().len();
    let mut initial = InitialModels::default();

    let q: Arc<dyn Regression> = match overrides.q {
        Some(q) => q,
        None => {
            let f = cfg.q_features.clone().unwrap_or_else(|| FeatureMap::outcome(w_dim).with_strata(k));
            let m = fit_q(sample, &w, f, &cfg.glm)?;
            initial.q = Some(m.clone());
            Arc::new(m)
        }
    };
    let mu_features = cfg.mu_features.clone().unwrap_or_else(|| FeatureMap::context(w_dim).with_strata(k));
    let g0_features = cfg.g0_features.clone().unwrap_or_else(|| FeatureMap::context(w_dim).with_strata(k));
    let (mu, refit_mu): (Arc<dyn Regression>, _) = match overrides.mu {
        Some(m) => (m, None),
        None => {
            let m = fit_mu(sample, &w, mu_features.clone(), range, &cfg.glm)?;
            initial.mu = Some(m.clone());
            (Arc::new(m), Some(mu_features))
        }
    };
    let (g0, refit_g0): (Arc<dyn Regression>, _) = match overrides.g0 {
        Some(g) => (g, None),
        None => {
            let m = fit_g0_continuous(sample, &w, g0_features.clone(), cfg.g_min, &cfg.glm)?;
            initial.g0 = Some(m.clone());
            (Arc::new(m), Some(g0_features))
        }
    };
    let sigma2: Arc<dyn Regression> = match overrides.sigma2 {
        Some(s) => s,
        None => {
            let f = cfg
                .sigma2_features
                .clone()
                .unwrap_or_else(|| FeatureMap::outcome(w_dim).with_strata(k));
            let qq = q.clone();
            let m = fit_sigma2(sample, &w, f, |o| qq.eval(o.a, o.w, o.v).clamp(Q_BOUND, 1.0 - Q_BOUND), &cfg.glm)?;
            initial.sigma2 = Some(m.clone());
            Arc::new(m)
        }
    };

    let a: Vec<f64> = sample.iter().map(|o| o.a).collect();
    let qf = QFunction {
        initial: q,
        sigma2: sigma2.clone(),
        g_min: cfg.g_min,
        steps: Vec::new(),
    };
    let (qa, q0): (Vec<f64>, Vec<f64>) = sample.iter().map(|o| qf.initial_pair(o.a, o.w, o.v)).unzip();
    let zeta2_0 = zeta2(&w, &a);
    let atoms = sample.len();
    let mut nu = ContinuousNuisance {
        q: qf,
        mu,
        g0,
        sigma2,
        g_min: cfg.g_min,
        zeta2_0,
        zeta2_star: zeta2_0,
        psi: f64::NAN,
        ratio_weights: vec![1.0; atoms],
        likelihood_ratio: vec![1.0; atoms],
        t_history: Vec::new(),
        qa,
        q0,
    };
    let mut engine = Engine {
        sample,
        h,
        w,
        a,
        range,
        cfg,
        refit_mu,
        refit_g0,
        warnings: Vec::new(),
    };
    let n = nominal_n(sample, h);
    let sqrt_n = (n as f64).sqrt();

    let mut state = engine.refresh(&mut nu)?;
    let mut log_lik = 0.0;
    let record = |step: usize, t: f64, nu: &ContinuousNuisance, st: &StepState, ll: f64| IterationRecord {
        step,
        t,
        psi: nu.psi,
        score: st.score,
        sigma_n: st.sigma_n,
        log_likelihood: ll,
        zeta2: Some(nu.zeta2_star),
    };
    let mut trace = vec![record(0, 0.0, &nu, &state, 0.0)];
    let stop = loop {
        let tol = (cfg.mic * state.sigma_n.max(0.0).sqrt() / sqrt_n).max(SCORE_FLOOR);
        if state.score.abs() <= tol {
            break StopReason::Score;
        }
        if nu.t_history.len() >= cfg.max_iter {
            break StopReason::MaxIter;
        }
        let prev_psi = nu.psi;
        let gamma = 1.0 - nu.zeta2_0 / nu.zeta2_star;
        let prev_half = ci_half_width(state.sigma_n, gamma, n, cfg.alpha);
        let (t, gain) = engine.step(&mut nu, &state)?;
        if t == 0.0 {
            break StopReason::Stationary;
        }
        log_lik += gain;
        state = engine.refresh(&mut nu)?;
        trace.push(record(nu.t_history.len(), t, &nu, &state, log_lik));
        if (nu.psi - prev_psi).abs() <= cfg.psi_tol * prev_half {
            break StopReason::PsiStep;
        }
    };
    if stop == StopReason::MaxIter {
        log::warn!("continuous targeting stopped at max_iter = {}", cfg.max_iter);
        engine.warnings.push(format!("targeting reached max_iter = {}", cfg.max_iter));
    }

    let gamma_n = 1.0 - nu.zeta2_0 / nu.zeta2_star;
    if (1.0 - gamma_n).abs() < 1e-6 {
        return Err(Error::DegenerateGamma(gamma_n));
    }
    let psi = match cfg.evaluation {
        Evaluation::Atoms => nu.psi,
        Evaluation::MonteCarlo { draws, seed } => monte_carlo_psi(&nu, sample, &engine.w, draws, seed)?,
    };
    let report = finish_report(
        sample,
        ReportParts {
            estimator: EstimatorKind::Continuous,
            psi,
            sigma_n: state.sigma_n,
            gamma_n,
            score: state.score,
            alpha: cfg.alpha,
            n,
            iterations: nu.t_history.len(),
            stop_reason: stop,
            converged: stop != StopReason::MaxIter,
            trace,
            zeta2_0: Some(nu.zeta2_0),
            zeta2_star: Some(nu.zeta2_star),
            warnings: std::mem::take(&mut engine.warnings),
        },
    );
    Ok(ContinuousEstimate {
        report,
        nuisance: nu,
        initial,
    })
}

/// Monte Carlo evaluation of `Ψᶜ(Pᵏ)`: `W` from the weighted marginal, then
/// `A = 0` with probability `g(0|W)` and otherwise a draw from the reweighted
/// atoms with nonzero exposure.
fn monte_carlo_psi(
    nu: &ContinuousNuisance,
    sample: &WeightedSample<'_>,
    base: &[f64],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidInput("Monte Carlo evaluation needs at least one draw".into()));
    }
    let mass: Vec<f64> = base.iter().zip(&nu.ratio_weights).map(|(w, r)| w * r).collect();
    let nonzero: Vec<usize> = (0..mass.len()).filter(|&i| sample.obs(i).a != 0.0).collect();
    let pick_w = WeightedIndex::new(&mass).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let pick_a = WeightedIndex::new(nonzero.iter().map(|&i| mass[i])).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = crate::rng::stream(seed, crate::rng::Purpose::MonteCarlo as u64);
    let mut acc = CompensatedSum::new();
    for _ in 0..draws {
        let o = sample.obs(pick_w.sample(&mut rng));
        let a = if rng.random::<f64>() < nu.g0_of(o.w, o.v) {
            0.0
        } else {
            sample.obs(nonzero[pick_a.sample(&mut rng)]).a
        };
        if a != 0.0 {
            let (qa, q0) = nu.q.eval_pair(a, o.w, o.v);
            acc.add(a * (qa - q0));
        }
    }
    Ok(acc.value() / draws as f64 / nu.zeta2_star)
}
