//! Weighted logistic-loss regression.
//!
//! Every conditional mean or probability in the estimators is a logistic
//! working model `expit(xᵀβ + offset)` fit by minimizing the HT-weighted
//! logistic loss. Targets may be fractional (any value in `[0, 1]`), which is
//! how outcome regressions and conditional second moments are fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ObsRef, StratumId, WeightedSample};
use crate::error::{Error, Result};

/// Lower/upper truncation for conditional probabilities of the exposure.
pub const DEFAULT_G_MIN: f64 = 0.01;

/// Bounds applied to fitted conditional means of the outcome so that their
/// logit stays finite.
pub const Q_BOUND: f64 = 1e-9;

const LOSS_CLAMP: f64 = 1e-12;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + eˣ)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ℓ(u, v) = -[u log v + (1-u) log(1-v)]`, with `v` clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn logistic_loss(u: f64, v: f64) -> f64 {
    let v = v.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    let mut loss = 0.0;
    if u > 0.0 {
        loss -= u * v.ln();
    }
    if u < 1.0 {
        loss -= (1.0 - u) * (-v).ln_1p();
    }
    loss
}

/// Logistic loss as a function of the linear predictor.
#[inline]
fn loss_on_logit(u: f64, eta: f64) -> f64 {
    softplus(eta) - u * eta
}

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    ncols: usize,
}

impl DesignMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            data: Vec::new(),
            ncols,
        }
    }

    pub fn with_capacity(ncols: usize, rows: usize) -> Self {
        Self {
            data: Vec::with_capacity(ncols * rows),
            ncols,
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols, "row length");
        self.data.extend_from_slice(row);
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.ncols.max(1)
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    /// Convergence when `‖∇‖₂ ≤ tol · Σ wᵢ`.
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge added when the Hessian is not positive definite.
    pub ridge: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            ridge: 1e-8,
        }
    }
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Whether a ridge term had to be added.
    pub ridge: bool,
    /// Final weighted loss divided by the total weight.
    pub loss: f64,
}

/// Coefficients and diagnostics of [`fit_weighted_glm`].
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

struct Objective<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
    w: &'a [f64],
    offset: Option<&'a [f64]>,
    ridge: f64,
}

impl Objective<'_> {
    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        dot(self.x.row(i), beta) + self.offset.map_or(0.0, |o| o[i])
    }

    fn loss(&self, beta: &[f64]) -> f64 {
        let mut acc = crate::sum::CompensatedSum::new();
        for i in 0..self.y.len() {
            if self.w[i] > 0.0 {
                acc.add(self.w[i] * loss_on_logit(self.y[i], self.eta(i, beta)));
            }
        }
        acc.value() + 0.5 * self.ridge * dot(beta, beta)
    }

    fn gradient_hessian(&self, beta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.x.ncols();
        let mut g = vec![0.0; p];
        let mut h = vec![0.0; p * p];
        for i in 0..self.y.len() {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            let mu = expit(self.eta(i, beta));
            let r = wi * (mu - self.y[i]);
            let c = wi * mu * (1.0 - mu);
            let row = self.x.row(i);
            for a in 0..p {
                g[a] += r * row[a];
                let ca = c * row[a];
                for b in a..p {
                    h[a * p + b] += ca * row[b];
                }
            }
        }
        for a in 0..p {
            g[a] += self.ridge * beta[a];
            h[a * p + a] += self.ridge;
            for b in 0..a {
                h[a * p + b] = h[b * p + a];
            }
        }
        (DVector::from_vec(g), DMatrix::from_row_slice(p, p, &h))
    }
}

/// Minimizes `Σ wᵢ ℓ(yᵢ, expit(xᵢᵀβ + offsetᵢ))` by Newton's method with
/// step halving. Non-convergence is reported through the diagnostics, with the
/// best iterate returned.
pub fn fit_weighted_glm(
    x: &DesignMatrix,
    y: &[f64],
    weights: &[f64],
    offset: Option<&[f64]>,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    let n = x.nrows();
    if y.len() != n || weights.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::InvalidInput("design, targets and weights differ in length".into()));
    }
    if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("regression target {bad} outside [0, 1]")));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("regression weights must be finite and >= 0".into()));
    }
    let total_w = crate::sum::sum(weights.iter().copied());
    if !(total_w > 0.0) {
        return Err(Error::InvalidInput("regression needs at least one positive weight".into()));
    }

    let p = x.ncols();
    let mut obj = Objective {
        x,
        y,
        w: weights,
        offset,
        ridge: 0.0,
    };
    let mut beta = vec![0.0; p];
    let mut loss = obj.loss(&beta);
    let mut ridge_used = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let (g, h) = obj.gradient_hessian(&beta);
        if g.norm() <= opts.tol * total_w {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                if !ridge_used {
                    log::debug!("singular Hessian; adding ridge {}", opts.ridge);
                }
                ridge_used = true;
                let scale = (h.trace() / p as f64).max(1.0);
                let mut lambda = opts.ridge * scale;
                loop {
                    let mut hr = h.clone();
                    for a in 0..p {
                        hr[(a, a)] += lambda;
                    }
                    if let Some(ch) = hr.cholesky() {
                        obj.ridge = obj.ridge.max(opts.ridge * total_w);
                        break ch.solve(&g);
                    }
                    lambda *= 10.0;
                    if lambda > 1e6 * scale {
                        return Err(Error::NonConvergence(
                            "regression Hessian could not be regularized".into(),
                        ));
                    }
                }
            }
        };
        let loss_before = obj.loss(&beta);
        let mut factor = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - factor * s).collect();
            let l = obj.loss(&cand);
            if l.is_finite() && l <= loss_before {
                moved = l < loss_before || factor == 1.0;
                beta = cand;
                loss = l;
                break;
            }
            factor *= 0.5;
        }
        if !moved {
            // No descent direction left at working precision.
            let (g, _) = obj.gradient_hessian(&beta);
            converged = g.norm() <= opts.tol.sqrt() * total_w;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence("non-finite regression coefficients".into()));
    }
    Ok(GlmFit {
        beta,
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            ridge: ridge_used,
            loss: loss / total_w,
        },
    })
}

/// Which exposure terms enter a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureTerms {
    None,
    /// `A`.
    Main,
    /// `A` and `A·Wⱼ`.
    Interacted,
}

/// Feature map `x(a, w, v)`: intercept, the context main effects, optional
/// stratum indicators and optional exposure terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub w_dim: usize,
    /// Number of strata; indicators for strata `1..k` are added when `k > 1`.
    pub strata: usize,
    pub exposure: ExposureTerms,
    /// Scale applied to the exposure inside the features.
    pub exposure_scale: f64,
}

impl FeatureMap {
    /// Intercept and context main effects.
    pub fn context(w_dim: usize) -> Self {
        Self {
            w_dim,
            strata: 0,
            exposure: ExposureTerms::None,
            exposure_scale: 1.0,
        }
    }

    /// Intercept, context, `A` and `A·W`.
    pub fn outcome(w_dim: usize) -> Self {
        Self {
            exposure: ExposureTerms::Interacted,
            ..Self::context(w_dim)
        }
    }

    pub fn with_strata(mut self, k: usize) -> Self {
        self.strata = k;
        self
    }

    pub fn with_exposure(mut self, terms: ExposureTerms) -> Self {
        self.exposure = terms;
        self
    }

    pub fn with_exposure_scale(mut self, scale: f64) -> Self {
        self.exposure_scale = scale;
        self
    }

    pub fn len(&self) -> usize {
        let strata = self.strata.saturating_sub(1);
        let exposure = match self.exposure {
            ExposureTerms::None => 0,
            ExposureTerms::Main => 1,
            ExposureTerms::Interacted => 1 + self.w_dim,
        };
        1 + self.w_dim + strata + exposure
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn uses_exposure(&self) -> bool {
        self.exposure != ExposureTerms::None
    }

    pub fn write(&self, a: f64, w: &[f64], v: StratumId, out: &mut Vec<f64>) {
        debug_assert_eq!(w.len(), self.w_dim);
        out.clear();
        out.push(1.0);
        out.extend_from_slice(w);
        for k in 1..self.strata {
            out.push(if v as usize == k { 1.0 } else { 0.0 });
        }
        let a = a * self.exposure_scale;
        match self.exposure {
            ExposureTerms::None => {}
            ExposureTerms::Main => out.push(a),
            ExposureTerms::Interacted => {
                out.push(a);
                out.extend(w.iter().map(|x| a * x));
            }
        }
    }
}

/// A fitted logistic working model with output post-processing:
/// `lo + (hi - lo) · clamp(expit(xᵀβ), bound, 1 - bound)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub features: FeatureMap,
    pub beta: Vec<f64>,
    pub bound: f64,
    pub output_lo: f64,
    pub output_hi: f64,
    pub diagnostics: FitDiagnostics,
}

impl GlmModel {
    /// A model that always predicts `value`, for fixtures and degenerate fits.
    pub fn constant(features: FeatureMap, value: f64) -> Self {
        let mut beta = vec![0.0; features.len()];
        beta[0] = logit(value.clamp(Q_BOUND, 1.0 - Q_BOUND));
        Self {
            features,
            beta,
            bound: Q_BOUND,
            output_lo: 0.0,
            output_hi: 1.0,
            diagnostics: FitDiagnostics {
                converged: true,
                iterations: 0,
                ridge: false,
                loss: 0.0,
            },
        }
    }

    /// Linear predictor.
    pub fn eta(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        thread_local! {
            static BUF: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
        }
        BUF.with(|buf| {
            let mut buf = buf.borrow_mut();
            self.features.write(a, w, v, &mut buf);
            dot(&buf, &self.beta)
        })
    }

    /// Probability scale prediction, truncated to `[bound, 1 - bound]`.
    pub fn prob(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        expit(self.eta(a, w, v)).clamp(self.bound, 1.0 - self.bound)
    }

    /// Prediction on the output scale.
    pub fn predict(&self, a: f64, w: &[f64], v: StratumId) -> f64 {
        self.output_lo + (self.output_hi - self.output_lo) * self.prob(a, w, v)
    }

    pub fn predict_obs(&self, o: ObsRef<'_>) -> f64 {
        self.predict(o.a, o.w, o.v)
    }
}

/// Builds the design matrix of `features` over the sampled units.
pub fn design_matrix(sample: &WeightedSample<'_>, features: &FeatureMap) -> DesignMatrix {
    let mut x = DesignMatrix::with_capacity(features.len(), sample.len());
    let mut row = Vec::with_capacity(features.len());
    for o in sample.iter() {
        features.write(o.a, o.w, o.v, &mut row);
        x.push_row(&row);
    }
    x
}

/// Fits `features` to `target` over the sampled units with the given
/// per-unit weights.
pub fn fit_on_sample<F>(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    target: F,
    bound: f64,
    output: (f64, f64),
    opts: &GlmOptions,
) -> Result<GlmModel>
where
    F: Fn(ObsRef<'_>) -> f64,
{
    if sample.is_empty() {
        return Err(Error::InvalidInput("cannot fit a model on an empty sample".into()));
    }
    if weights.len() != sample.len() {
        return Err(Error::InvalidInput("one weight per sampled unit required".into()));
    }
    let x = design_matrix(sample, &features);
    let y: Vec<f64> = sample.iter().map(target).collect();
    let fit = fit_weighted_glm(&x, &y, weights, None, opts)?;
    if !fit.diagnostics.converged {
        log::warn!(
            "working model did not converge after {} iterations",
            fit.diagnostics.iterations
        );
    }
    Ok(GlmModel {
        features,
        beta: fit.beta,
        bound,
        output_lo: output.0,
        output_hi: output.1,
        diagnostics: fit.diagnostics,
    })
}

fn check_positivity(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    event: impl Fn(f64) -> bool,
    what: &str,
) -> Result<()> {
    let (mut with, mut without) = (false, false);
    for (o, &w) in sample.iter().zip(weights) {
        if w > 0.0 {
            if event(o.a) {
                with = true;
            } else {
                without = true;
            }
        }
    }
    if with && without {
        Ok(())
    } else {
        Err(Error::Positivity(what.to_string()))
    }
}

/// Outcome regression `Q(a, w) = E(Y | A = a, W = w)`.
pub fn fit_q(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    opts: &GlmOptions,
) -> Result<GlmModel> {
    fit_on_sample(sample, weights, features, |o| o.y, Q_BOUND, (0.0, 1.0), opts)
}

/// `g(1 | w) = P(A = 1 | W = w)` for a binary exposure.
pub fn fit_g_binary(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    g_min: f64,
    opts: &GlmOptions,
) -> Result<GlmModel> {
    check_positivity(sample, weights, |a| a == 1.0, "exposure is constant")?;
    fit_on_sample(sample, weights, features, |o| o.a, g_min, (0.0, 1.0), opts)
}

/// `g(0 | w) = P(A = 0 | W = w)` for a continuous exposure.
pub fn fit_g0_continuous(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    g_min: f64,
    opts: &GlmOptions,
) -> Result<GlmModel> {
    check_positivity(sample, weights, |a| a == 0.0, "reference level A = 0 missing or universal")?;
    fit_on_sample(
        sample,
        weights,
        features,
        |o| if o.a == 0.0 { 1.0 } else { 0.0 },
        g_min,
        (0.0, 1.0),
        opts,
    )
}

/// `μ(w) = E(A | W = w)` for an exposure in `[lo, hi]`, fit on the affinely
/// rescaled exposure `(A - lo)/(hi - lo)`.
pub fn fit_mu(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    range: (f64, f64),
    opts: &GlmOptions,
) -> Result<GlmModel> {
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("exposure range [{lo}, {hi}] is empty")));
    }
    check_positivity(sample, weights, |a| a != 0.0, "exposure is identically zero")?;
    fit_on_sample(
        sample,
        weights,
        features,
        |o| ((o.a - lo) / (hi - lo)).clamp(0.0, 1.0),
        0.0,
        (lo, hi),
        opts,
    )
}

/// Conditional second moment of the residual, `Var(Y | A, W)`, fit by
/// regressing `(Y - Q(A, W))²` on `features`.
pub fn fit_sigma2<Q>(
    sample: &WeightedSample<'_>,
    weights: &[f64],
    features: FeatureMap,
    q: Q,
    opts: &GlmOptions,
) -> Result<GlmModel>
where
    Q: Fn(ObsRef<'_>) -> f64,
{
    fit_on_sample(
        sample,
        weights,
        features,
        |o| (o.y - q(o)).powi(2).min(1.0),
        0.0,
        (0.0, 1.0),
        opts,
    )
}
