//! TMLE of the binary-exposure variable importance
//! `ψᵇ = E[Q(1, W) - Q(0, W)]`.
//!
//! The outcome regression is fluctuated along the logistic submodel
//! `logit Q(t) = logit Q + t (2A - 1)/g(A|W)`; the optimal `t` zeroes the HT
//! mean of the second influence-curve component, and the plug-in over the HT
//! marginal of `W` zeroes the first.

use serde::Serialize;

use super::{
    check_alpha, check_h, finish_report, nominal_n, substitution_variance, EstimatorKind,
    IterationRecord, Regression, ReportParts, StopReason, TmleReport,
};
use crate::data::{ObsRef, SamplingFunction, StratumId, WeightedSample};
use crate::error::{Error, Result};
use crate::glm::{
    expit, fit_g_binary, fit_q, logit, FeatureMap, GlmModel, GlmOptions, DEFAULT_G_MIN, Q_BOUND,
};
use crate::sum::CompensatedSum;

/// Settings of [`estimate_binary`].
#[derive(Debug, Clone)]
pub struct BinaryConfig {
    pub alpha: f64,
    pub g_min: f64,
    /// Outcome-regression features; defaults to `1, W, A, A·W`.
    pub q_features: Option<FeatureMap>,
    /// Exposure-mechanism features; defaults to `1, W`.
    pub g_features: Option<FeatureMap>,
    pub glm: GlmOptions,
    /// The fluctuation stops once `|score| ≤ score_tol · Σ wᵢ`.
    pub score_tol: f64,
    /// Largest admissible `|t|`.
    pub t_bound: f64,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            g_min: DEFAULT_G_MIN,
            q_features: None,
            g_features: None,
            glm: GlmOptions::default(),
            score_tol: 1e-10,
            t_bound: 50.0,
        }
    }
}

/// Fitted `Q`, `g(1|·)` and the fluctuation `t*`.
pub struct BinaryNuisance {
    pub q: Box<dyn Regression>,
    /// `g(1 | w)`; the exposure argument is ignored.
    pub g: Box<dyn Regression>,
    pub g_min: f64,
    pub t_star: f64,
}

impl BinaryNuisance {
    pub fn new(q: Box<dyn Regression>, g: Box<dyn Regression>, g_min: f64) -> Self {
        Self {
            q,
            g,
            g_min,
            t_star: 0.0,
        }
    }

    /// Initial regression, kept inside `[Q_BOUND, 1 - Q_BOUND]`.
    pub fn q_initial(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        self.q.eval(a, w, v).clamp(Q_BOUND, 1.0 - Q_BOUND)
    }

    /// Truncated `g(a | w)`.
    pub fn g_of(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        let g1 = self.g.eval(1.0, w, v).clamp(self.g_min, 1.0 - self.g_min);
        if a == 1.0 {
            g1
        } else {
            1.0 - g1
        }
    }

    /// Clever covariate `(2a - 1)/g(a | w)`.
    pub fn clever(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        (2.0 * a - 1.0) / self.g_of(a, w, v)
    }

    /// `Q(t)(a, w)`.
    pub fn q_at(&self, t: f64, a: f64, w: &[f64], v: StratumId) -> f64 {
        let base = self.q_initial(a, w, v);
        if t == 0.0 {
            base
        } else {
            expit(logit(base) + t * self.clever(a, w, v))
        }
    }

    /// `Q*(a, w) = Q(t*)(a, w)`.
    pub fn q_star(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        self.q_at(self.t_star, a, w, v)
    }
}

/// `Dᵇ(o) = Q(1,w) - Q(0,w) - ψ + (y - Q(a,w))(2a - 1)/g(a|w)` at the
/// nuisance's current fluctuation.
pub fn influence_b(nuisance: &BinaryNuisance, psi: f64, o: ObsRef<'_>) -> f64 {
    let d1 = nuisance.q_star(1.0, o.w, o.v) - nuisance.q_star(0.0, o.w, o.v) - psi;
    let d2 = (o.y - nuisance.q_star(o.a, o.w, o.v)) * nuisance.clever(o.a, o.w, o.v);
    d1 + d2
}

/// Result of [`fluctuate_binary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fluctuation {
    pub t: f64,
    /// HT-weighted score `Σ wᵢ Hᵢ (Yᵢ - Q(t)ᵢ)` at `t`.
    pub score: f64,
    pub converged: bool,
    /// `|t|` reached the admissible bound without a sign change of the score.
    pub at_bound: bool,
    pub iterations: usize,
}

/// Per-unit inputs of the one-dimensional fluctuation problem.
struct Submodel {
    offset: Vec<f64>,
    h: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Submodel {
    fn score(&self, t: f64) -> (f64, f64) {
        let mut s = CompensatedSum::new();
        let mut ds = CompensatedSum::new();
        for i in 0..self.y.len() {
            let x = self.offset[i] + t * self.h[i];
            let q = expit(x);
            // y - q without cancellation in the tails.
            let resid = self.y[i] * expit(-x) - (1.0 - self.y[i]) * q;
            s.add(self.w[i] * self.h[i] * resid);
            ds.add(-self.w[i] * self.h[i] * self.h[i] * q * (1.0 - q));
        }
        (s.value(), ds.value())
    }
}

/// Minimizes the HT-weighted logistic risk along the fluctuation by
/// safeguarded Newton iterations on its (decreasing) score.
pub fn fluctuate_binary(
    nuisance: &BinaryNuisance,
    sample: &WeightedSample<'_>,
    weights: &[f64],
    score_tol: f64,
    t_bound: f64,
) -> Result<Fluctuation> {
    if weights.len() != sample.len() {
        return Err(Error::InvalidInput("one weight per sampled unit required".into()));
    }
    let mut m = Submodel {
        offset: Vec::with_capacity(sample.len()),
        h: Vec::with_capacity(sample.len()),
        y: Vec::with_capacity(sample.len()),
        w: weights.to_vec(),
    };
    for o in sample.iter() {
        m.offset.push(logit(nuisance.q_initial(o.a, o.w, o.v)));
        m.h.push(nuisance.clever(o.a, o.w, o.v));
        m.y.push(o.y);
    }
    let tol = score_tol * crate::sum::sum(weights.iter().copied());

    let (s0, _) = m.score(0.0);
    if s0.abs() <= tol {
        return Ok(Fluctuation {
            t: 0.0,
            score: s0,
            converged: true,
            at_bound: false,
            iterations: 0,
        });
    }

    // The score is decreasing in t, so the root lies on the side of sign(s0).
    let dir = s0.signum();
    let mut lo = 0.0;
    let mut width = 1.0;
    let hi = loop {
        let cand = (dir * width).clamp(-t_bound, t_bound);
        let (s, _) = m.score(cand);
        if s.abs() <= tol {
            return Ok(Fluctuation {
                t: cand,
                score: s,
                converged: true,
                at_bound: false,
                iterations: 0,
            });
        }
        if s.signum() != dir {
            break cand;
        }
        lo = cand;
        if cand.abs() >= t_bound {
            log::warn!("fluctuation score keeps its sign up to |t| = {t_bound}");
            return Ok(Fluctuation {
                t: cand,
                score: s,
                converged: false,
                at_bound: true,
                iterations: 0,
            });
        }
        width *= 2.0;
    };
    let mut hi = hi;
    // Invariant: score(lo) has sign dir, score(hi) the opposite sign.
    let mut t = lo;
    let mut iterations = 0;
    let (mut s, mut ds) = m.score(t);
    while iterations < 200 {
        iterations += 1;
        let newton = t - s / ds;
        let inside = if lo < hi {
            newton > lo && newton < hi
        } else {
            newton > hi && newton < lo
        };
        t = if inside && ds < 0.0 { newton } else { 0.5 * (lo + hi) };
        (s, ds) = m.score(t);
        if s.abs() <= tol {
            return Ok(Fluctuation {
                t,
                score: s,
                converged: true,
                at_bound: false,
                iterations,
            });
        }
        if s.signum() == dir {
            lo = t;
        } else {
            hi = t;
        }
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
            break;
        }
    }
    // Bracket collapsed at working precision.
    Ok(Fluctuation {
        t,
        score: s,
        converged: s.abs() <= tol.max(1e-14),
        at_bound: false,
        iterations,
    })
}

/// Replacement nuisances; for test worlds where `Q₀` or `g₀` is known.
#[derive(Default)]
pub struct BinaryOverrides {
    pub q: Option<Box<dyn Regression>>,
    pub g: Option<Box<dyn Regression>>,
}

/// Report plus the fitted nuisances.
pub struct BinaryEstimate {
    pub report: TmleReport,
    pub nuisance: BinaryNuisance,
    pub q_model: Option<GlmModel>,
    pub g_model: Option<GlmModel>,
    pub fluctuation: Fluctuation,
}

/// TMLE of `ψᵇ` on a binary-exposure sample drawn with sampling function `h`.
pub fn estimate_binary(
    sample: &WeightedSample<'_>,
    h: &SamplingFunction,
    cfg: &BinaryConfig,
) -> Result<TmleReport> {
    estimate_binary_with(sample, h, cfg, BinaryOverrides::default()).map(|e| e.report)
}

/// [`estimate_binary`] with optional known nuisances, returning the fits.
pub fn estimate_binary_with(
    sample: &WeightedSample<'_>,
    h: &SamplingFunction,
    cfg: &BinaryConfig,
    overrides: BinaryOverrides,
) -> Result<BinaryEstimate> {
    let ds = sample.dataset();
    if ds.exposure() != crate::data::ExposureKind::Binary {
        return Err(Error::InvalidInput("binary TMLE needs a binary exposure".into()));
    }
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    check_alpha(cfg.alpha)?;
    check_h(sample, h)?;
    let weights = sample.ht_weights();
    let w_dim = ds.w_dim();
    let k = ds.strata().len();

    let (q, q_model): (Box<dyn Regression>, _) = match overrides.q {
        Some(q) => (q, None),
        None => {
            let f = cfg.q_features.clone().unwrap_or_else(|| FeatureMap::outcome(w_dim).with_strata(k));
            let m = fit_q(sample, &weights, f, &cfg.glm)?;
            (Box::new(m.clone()), Some(m))
        }
    };
    let (g, g_model): (Box<dyn Regression>, _) = match overrides.g {
        Some(g) => (g, None),
        None => {
            let f = cfg.g_features.clone().unwrap_or_else(|| FeatureMap::context(w_dim).with_strata(k));
            let m = fit_g_binary(sample, &weights, f, cfg.g_min, &cfg.glm)?;
            (Box::new(m.clone()), Some(m))
        }
    };
    let mut nuisance = BinaryNuisance::new(q, g, cfg.g_min);
    let mut warnings = Vec::new();

    let plug_in = |nu: &BinaryNuisance| {
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for (o, &wi) in sample.iter().zip(&weights) {
            num.add(wi * (nu.q_star(1.0, o.w, o.v) - nu.q_star(0.0, o.w, o.v)));
            den.add(wi);
        }
        num.value() / den.value()
    };
    let influence = |nu: &BinaryNuisance, psi: f64| -> Vec<f64> { sample.iter().map(|o| influence_b(nu, psi, o)).collect() };

    let psi0 = plug_in(&nuisance);
    let d0 = influence(&nuisance, psi0);
    let rec0 = IterationRecord {
        step: 0,
        t: 0.0,
        psi: psi0,
        score: sample.ht_integral_values(&d0),
        sigma_n: substitution_variance(sample, &d0, h),
        log_likelihood: 0.0,
        zeta2: None,
    };

    let fl = fluctuate_binary(&nuisance, sample, &weights, cfg.score_tol, cfg.t_bound)?;
    if fl.at_bound {
        warnings.push(format!("fluctuation hit |t| = {}", cfg.t_bound));
    }
    nuisance.t_star = fl.t;
    let psi = plug_in(&nuisance);
    let d = influence(&nuisance, psi);
    let score = sample.ht_integral_values(&d);
    let sigma_n = substitution_variance(sample, &d, h);
    let risk = |t: f64| {
        sample
            .iter()
            .zip(&weights)
            .map(|(o, &wi)| wi * crate::glm::logistic_loss(o.y, nuisance.q_at(t, o.a, o.w, o.v)))
            .sum::<f64>()
    };
    let rec1 = IterationRecord {
        step: 1,
        t: fl.t,
        psi,
        score,
        sigma_n,
        log_likelihood: risk(0.0) - risk(fl.t),
        zeta2: None,
    };
    let n = nominal_n(sample, h);
    let report = finish_report(
        sample,
        ReportParts {
            estimator: EstimatorKind::Binary,
            psi,
            sigma_n,
            gamma_n: 0.0,
            score,
            alpha: cfg.alpha,
            n,
            iterations: 1,
            stop_reason: StopReason::OneStep,
            converged: fl.converged,
            trace: vec![rec0, rec1],
            zeta2_0: None,
            zeta2_star: None,
            warnings,
        },
    );
    Ok(BinaryEstimate {
        report,
        nuisance,
        q_model,
        g_model,
        fluctuation: fl,
    })
}
