//! Observations, data sets and the Horvitz-Thompson weighted empirical measure.
//!
//! A [`Dataset`] is stored column-wise and is immutable once built. Outcomes
//! are kept on the unit interval; the affine map back to the original units
//! lives in [`OutcomeScale`]. A [`WeightedSample`] is a set of row indices into
//! a data set together with the inclusion probability of each selected unit,
//! which is all that is needed to integrate against the HT measure
//!
//! ```text
//! P^p f = (1/N) Σ_{i ∈ S} f(Oᵢ) / pᵢ.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Index of a stratum (a value of the summary measure `V`) in a [`StratumDomain`].
pub type StratumId = u32;

/// Kind of exposure carried by a data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExposureKind {
    /// `A ∈ {0, 1}`.
    Binary,
    /// `A ∈ [lo, hi]` with `lo <= 0 <= hi`; zero is the reference level.
    Continuous { lo: f64, hi: f64 },
}

impl ExposureKind {
    fn check(&self, a: f64) -> Result<()> {
        match *self {
            ExposureKind::Binary if a == 0.0 || a == 1.0 => Ok(()),
            ExposureKind::Binary => Err(Error::InvalidInput(format!(
                "binary exposure must be 0 or 1, got {a}"
            ))),
            ExposureKind::Continuous { lo, hi } if a >= lo && a <= hi => Ok(()),
            ExposureKind::Continuous { lo, hi } => Err(Error::InvalidInput(format!(
                "exposure {a} outside the declared range [{lo}, {hi}]"
            ))),
        }
    }
}

/// One record `(W, A, Y, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub w: Vec<f64>,
    pub a: f64,
    pub y: f64,
    pub v: StratumId,
}

/// Borrowed view of one row of a [`Dataset`]. `y` is on the unit interval.
#[derive(Debug, Clone, Copy)]
pub struct ObsRef<'a> {
    pub w: &'a [f64],
    pub a: f64,
    pub y: f64,
    pub v: StratumId,
}

/// Affine map between original outcome units and `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub min: f64,
    pub max: f64,
}

impl OutcomeScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "outcome range [{min}, {max}] is not finite"
            )));
        }
        if max <= min {
            return Err(Error::DegenerateOutcome(min));
        }
        Ok(Self { min, max })
    }

    pub fn identity() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.min) / self.range()
    }

    /// Inverse of [`OutcomeScale::scale`].
    pub fn unscale_value(&self, x: f64) -> f64 {
        self.min + x * self.range()
    }

    /// Back-transforms a contrast of outcome means (a variable-importance
    /// parameter, a CI half-width); the offset cancels.
    pub fn unscale_effect(&self, x: f64) -> f64 {
        x * self.range()
    }

    pub fn unscale_variance(&self, x: f64) -> f64 {
        x * self.range() * self.range()
    }
}

/// How raw outcomes are mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeRange {
    /// Use the observed minimum and maximum.
    FromData,
    /// Use a fixed range, clipping outcomes that fall outside it.
    Fixed(OutcomeScale),
}

/// Outcomes mapped onto the unit interval.
#[derive(Debug, Clone)]
pub struct RescaledOutcome {
    pub y: Vec<f64>,
    pub scale: OutcomeScale,
    /// Number of raw values clipped to the fixed range.
    pub clipped: usize,
}

/// Maps raw outcomes affinely onto `[0, 1]`.
pub fn rescale_outcome(raw: &[f64], range: OutcomeRange) -> Result<RescaledOutcome> {
    let scale = match range {
        OutcomeRange::Fixed(scale) => scale,
        OutcomeRange::FromData => {
            if raw.is_empty() {
                return Err(Error::InvalidInput("no outcomes to rescale".into()));
            }
            let (lo, hi) = raw
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                    (lo.min(y), hi.max(y))
                });
            if hi <= lo {
                return Err(Error::DegenerateOutcome(lo));
            }
            OutcomeScale::new(lo, hi)?
        }
    };
    let mut clipped = 0;
    let y = raw
        .iter()
        .map(|&y| {
            let s = scale.scale(y);
            if (0.0..=1.0).contains(&s) {
                s
            } else {
                clipped += 1;
                s.clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(RescaledOutcome { y, scale, clipped })
}

/// Labels of the strata, in id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumDomain {
    labels: Vec<String>,
}

impl StratumDomain {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("empty stratum domain".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(Error::InvalidInput(format!("duplicate stratum label `{l}`")));
            }
        }
        Ok(Self { labels })
    }

    /// A single stratum, used when no summary measure is available.
    pub fn single() -> Self {
        Self {
            labels: vec!["all".into()],
        }
    }

    /// Strata labelled `1..=k`.
    pub fn numbered(k: usize) -> Self {
        Self {
            labels: (1..=k).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: StratumId) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id_of(&self, label: &str) -> Option<StratumId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| i as StratumId)
    }
}

/// Maps a continuous summary measure onto strata: value `x` goes to the
/// number of edges `<= x`.
pub fn bucketize(values: &[f64], edges: &[f64]) -> Vec<StratumId> {
    debug_assert!(edges.windows(2).all(|e| e[0] < e[1]));
    values
        .iter()
        .map(|&x| edges.partition_point(|&e| e <= x) as StratumId)
        .collect()
}

/// Immutable, column-oriented collection of observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    w_dim: usize,
    w: Vec<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
    v: Vec<StratumId>,
    exposure: ExposureKind,
    scale: OutcomeScale,
    strata: StratumDomain,
    clipped: usize,
}

/// Incremental construction of a [`Dataset`].
#[derive(Debug, Clone)]
pub struct DatasetBuilder {
    w_dim: usize,
    w: Vec<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
    v: Vec<StratumId>,
    exposure: ExposureKind,
    strata: StratumDomain,
}

impl DatasetBuilder {
    pub fn new(w_dim: usize, exposure: ExposureKind, strata: StratumDomain) -> Self {
        Self {
            w_dim,
            w: Vec::new(),
            a: Vec::new(),
            y: Vec::new(),
            v: Vec::new(),
            exposure,
            strata,
        }
    }

    pub fn with_capacity(mut self, n: usize) -> Self {
        self.w.reserve(n * self.w_dim);
        self.a.reserve(n);
        self.y.reserve(n);
        self.v.reserve(n);
        self
    }

    /// Appends an observation whose outcome is still in original units.
    pub fn push(&mut self, obs: Observation) -> Result<()> {
        self.push_parts(&obs.w, obs.a, obs.y, obs.v)
    }

    pub fn push_parts(&mut self, w: &[f64], a: f64, y: f64, v: StratumId) -> Result<()> {
        if w.len() != self.w_dim {
            return Err(Error::InvalidInput(format!(
                "expected {} context components, got {}",
                self.w_dim,
                w.len()
            )));
        }
        if !(w.iter().all(|x| x.is_finite()) && a.is_finite() && y.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in observation".into()));
        }
        self.exposure.check(a)?;
        if v as usize >= self.strata.len() {
            return Err(Error::InvalidInput(format!(
                "stratum id {v} outside a domain of {} strata",
                self.strata.len()
            )));
        }
        self.w.extend_from_slice(w);
        self.a.push(a);
        self.y.push(y);
        self.v.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn build(self, range: OutcomeRange) -> Result<Dataset> {
        if self.a.is_empty() {
            return Err(Error::InvalidInput("data set has no observations".into()));
        }
        if let ExposureKind::Continuous { lo, hi } = self.exposure {
            if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "continuous exposure range [{lo}, {hi}] must contain 0"
                )));
            }
        }
        let out = rescale_outcome(&self.y, range)?;
        if out.clipped > 0 {
            log::debug!("clipped {} outcomes to the declared range", out.clipped);
        }
        Ok(Dataset {
            w_dim: self.w_dim,
            w: self.w,
            a: self.a,
            y: out.y,
            v: self.v,
            exposure: self.exposure,
            scale: out.scale,
            strata: self.strata,
            clipped: out.clipped,
        })
    }
}

impl Dataset {
    pub fn builder(w_dim: usize, exposure: ExposureKind, strata: StratumDomain) -> DatasetBuilder {
        DatasetBuilder::new(w_dim, exposure, strata)
    }

    /// Number of observations `N`.
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn exposure(&self) -> ExposureKind {
        self.exposure
    }

    pub fn outcome_scale(&self) -> OutcomeScale {
        self.scale
    }

    pub fn strata(&self) -> &StratumDomain {
        &self.strata
    }

    /// Number of outcomes clipped while rescaling.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    #[inline]
    pub fn obs(&self, i: usize) -> ObsRef<'_> {
        ObsRef {
            w: &self.w[i * self.w_dim..(i + 1) * self.w_dim],
            a: self.a[i],
            y: self.y[i],
            v: self.v[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ObsRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.obs(i))
    }

    pub fn strata_column(&self) -> &[StratumId] {
        &self.v
    }

    /// Raw outcome of row `i` in original units (after clipping).
    pub fn y_original(&self, i: usize) -> f64 {
        self.scale.unscale_value(self.y[i])
    }

    pub fn unscale_value(&self, x: f64) -> f64 {
        self.scale.unscale_value(x)
    }

    pub fn stratum_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.strata.len()];
        for &v in &self.v {
            counts[v as usize] += 1;
        }
        counts
    }

    pub fn stratum_frequencies(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.stratum_counts()
            .into_iter()
            .map(|c| c as f64 / n)
            .collect()
    }

    /// Full-data mean `P_N f`.
    pub fn mean<F: Fn(ObsRef<'_>) -> f64>(&self, f: F) -> f64 {
        self.iter().map(f).collect::<CompensatedSum>().value() / self.len() as f64
    }
}

/// Sampling function `h` on the strata, bounded below by `floor > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingFunction {
    values: Vec<f64>,
    floor: f64,
}

impl SamplingFunction {
    /// `h ≡ 1`.
    pub fn uniform(n_strata: usize) -> Self {
        Self {
            values: vec![1.0; n_strata],
            floor: 1.0,
        }
    }

    /// Uses the given values as-is; the floor is their minimum.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("sampling function has no strata".into()));
        }
        for (i, &h) in values.iter().enumerate() {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::NonPositiveSamplingFunction {
                    stratum: i.to_string(),
                    value: h,
                });
            }
        }
        let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { values, floor })
    }

    /// Raises every value to at least `floor`.
    pub fn with_floor(values: Vec<f64>, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidInput(format!("floor c_h must be positive, got {floor}")));
        }
        let values: Vec<f64> = values.into_iter().map(|h| h.max(floor)).collect();
        let mut h = Self::new(values)?;
        h.floor = floor;
        Ok(h)
    }

    #[inline]
    pub fn eval(&self, v: StratumId) -> f64 {
        self.values[v as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P_N h`, the empirical mean of `h(V)` over the data set.
    pub fn mean_over(&self, dataset: &Dataset) -> f64 {
        let freq = dataset.stratum_frequencies();
        freq.iter().zip(&self.values).map(|(f, h)| f * h).sum()
    }

    /// Rescales `h` so that `P_N h = 1`; the floor scales along.
    pub fn normalized(&self, dataset: &Dataset) -> Self {
        let m = self.mean_over(dataset);
        Self {
            values: self.values.iter().map(|h| h / m).collect(),
            floor: self.floor / m,
        }
    }
}

/// Which design produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Poisson,
    Rejective,
    Pareto,
    /// Every unit with `p = 1`.
    Census,
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignKind::Poisson => "poisson",
            DesignKind::Rejective => "rejective",
            DesignKind::Pareto => "pareto",
            DesignKind::Census => "census",
        })
    }
}

/// Selected row indices with their inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub units: Vec<usize>,
    pub p: Vec<f64>,
    pub design: DesignKind,
}

/// A drawn sub-sample of a [`Dataset`], carrying HT weights.
#[derive(Debug, Clone)]
pub struct WeightedSample<'a> {
    dataset: &'a Dataset,
    units: Vec<usize>,
    p: Vec<f64>,
    design: DesignKind,
}

/// One atom of the HT marginal measure of `W`.
#[derive(Debug, Clone, Copy)]
pub struct ContextAtom<'a> {
    pub unit: usize,
    pub w: &'a [f64],
    pub mass: f64,
}

impl<'a> WeightedSample<'a> {
    pub fn new(dataset: &'a Dataset, draw: SampleDraw) -> Result<Self> {
        if draw.units.len() != draw.p.len() {
            return Err(Error::InvalidInput("units and probabilities differ in length".into()));
        }
        for (&i, &p) in draw.units.iter().zip(&draw.p) {
            if i >= dataset.len() {
                return Err(Error::InvalidInput(format!("unit {i} outside the data set")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "inclusion probability {p} of unit {i} not in (0, 1]"
                )));
            }
        }
        Ok(Self {
            dataset,
            units: draw.units,
            p: draw.p,
            design: draw.design,
        })
    }

    /// The whole data set with `pᵢ = 1`.
    pub fn census(dataset: &'a Dataset) -> Self {
        Self {
            dataset,
            units: (0..dataset.len()).collect(),
            p: vec![1.0; dataset.len()],
            design: DesignKind::Census,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    /// Size `|S|` of the sub-sample.
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Size `N` of the data set the sample was drawn from.
    pub fn big_n(&self) -> usize {
        self.dataset.len()
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn design(&self) -> DesignKind {
        self.design
    }

    /// The `k`-th selected observation.
    #[inline]
    pub fn obs(&self, k: usize) -> ObsRef<'a> {
        self.dataset.obs(self.units[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = ObsRef<'a>> + '_ {
        self.units.iter().map(move |&i| self.dataset.obs(i))
    }

    /// HT masses `1/(N pᵢ)`, one per selected unit.
    pub fn ht_weights(&self) -> Vec<f64> {
        let n = self.big_n() as f64;
        self.p.iter().map(|p| 1.0 / (n * p)).collect()
    }

    /// `(1/N) Σ_{i∈S} f(Oᵢ)/pᵢ`.
    pub fn ht_integral<F: FnMut(ObsRef<'a>) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = CompensatedSum::new();
        for (k, &p) in self.p.iter().enumerate() {
            acc.add(f(self.obs(k)) / p);
        }
        acc.value() / self.big_n() as f64
    }

    /// HT integral of values already computed per selected unit.
    pub fn ht_integral_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let mut acc = CompensatedSum::new();
        for (x, p) in values.iter().zip(&self.p) {
            acc.add(x / p);
        }
        acc.value() / self.big_n() as f64
    }

    /// Total mass of the HT measure, `P^p 1`.
    pub fn ht_mass(&self) -> f64 {
        self.ht_integral(|_| 1.0)
    }

    /// Marginal HT measure of the contexts: atoms at `Wᵢ` with mass `1/(N pᵢ)`.
    pub fn ht_marginal_w(&self) -> Vec<ContextAtom<'a>> {
        let n = self.big_n() as f64;
        self.units
            .iter()
            .zip(&self.p)
            .map(|(&i, &p)| ContextAtom {
                unit: i,
                w: self.dataset.obs(i).w,
                mass: 1.0 / (n * p),
            })
            .collect()
    }
}
