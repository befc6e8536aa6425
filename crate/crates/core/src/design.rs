//! Unequal-probability sampling designs.
//!
//! Inclusion probabilities are `pᵢ = n h(Vᵢ) / N`. Three designs draw from an
//! [`InclusionPlan`]:
//!
//! * Poisson: independent Bernoulli(`pᵢ`) inclusions, random size;
//! * rejective: Poisson conditioned on the size being exactly `n`, realized by
//!   acceptance-rejection;
//! * Pareto: fixed-size order sampling, used when rejection takes too long.
//!
//! Units sharing the same `pᵢ` are handled as a block: the number selected in a
//! block of `K` units is Binomial(`K`, `p`) and, given that count, the selected
//! units are a uniform subset of the block. This is the same law as unit-wise
//! Bernoulli draws, but one attempt costs one binomial variate per distinct
//! probability instead of one uniform per unit.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::data::{Dataset, DesignKind, ObsRef, SampleDraw, SamplingFunction};
use crate::error::{Error, Result};

/// Inclusion probabilities are kept inside `[CLIP_EPS, 1 - CLIP_EPS]`.
pub const CLIP_EPS: f64 = 1e-6;

/// Attempts allowed before rejective sampling falls back to Pareto sampling.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Below this value of `d_N = Σ pᵢ(1-pᵢ)` the rejective design is a poor
/// approximation of its Poisson counterpart.
pub const D_N_WARNING: f64 = 25.0;

/// Per-unit inclusion probabilities for a target sub-sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionPlan {
    n: usize,
    big_n: usize,
    units: Vec<usize>,
    p: Vec<f64>,
    clip_eps: f64,
    clipped: usize,
    d_n: f64,
}

/// Builds `pᵢ = clip(n h(Vᵢ) / N)` for every unit of `dataset`.
pub fn make_plan(dataset: &Dataset, h: &SamplingFunction, n: usize) -> Result<InclusionPlan> {
    make_plan_excluding(dataset, h, n, &[])
}

/// Like [`make_plan`], but the `excluded` rows can never be selected. The
/// denominator stays the full `N`.
pub fn make_plan_excluding(
    dataset: &Dataset,
    h: &SamplingFunction,
    n: usize,
    excluded: &[usize],
) -> Result<InclusionPlan> {
    let big_n = dataset.len();
    if n >= big_n {
        return Err(Error::SampleSizeTooLarge { n, big_n });
    }
    if n == 0 {
        return Err(Error::InvalidInput("sub-sample size must be positive".into()));
    }
    if h.len() != dataset.strata().len() {
        return Err(Error::InvalidInput(format!(
            "sampling function covers {} strata, data set has {}",
            h.len(),
            dataset.strata().len()
        )));
    }
    for (v, &value) in h.values().iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveSamplingFunction {
                stratum: dataset.strata().label(v as u32).to_string(),
                value,
            });
        }
    }
    let mut skip = vec![false; big_n];
    for &i in excluded {
        if i >= big_n {
            return Err(Error::InvalidInput(format!("excluded unit {i} outside the data set")));
        }
        skip[i] = true;
    }
    let scale = n as f64 / big_n as f64;
    let strata = dataset.strata_column();
    let mut units = Vec::with_capacity(big_n - excluded.len());
    let mut p = Vec::with_capacity(big_n - excluded.len());
    for (i, &v) in strata.iter().enumerate() {
        if !skip[i] {
            units.push(i);
            p.push(scale * h.eval(v));
        }
    }
    Ok(InclusionPlan::assemble(n, big_n, units, p, CLIP_EPS, true))
}

impl InclusionPlan {
    fn assemble(
        n: usize,
        big_n: usize,
        units: Vec<usize>,
        mut p: Vec<f64>,
        clip_eps: f64,
        clip: bool,
    ) -> Self {
        let mut clipped = 0;
        if clip {
            for pi in p.iter_mut() {
                if *pi <= clip_eps || *pi >= 1.0 - clip_eps {
                    *pi = pi.clamp(clip_eps, 1.0 - clip_eps);
                    clipped += 1;
                }
            }
        }
        if clipped > 0 {
            log::warn!("{clipped} inclusion probabilities clipped to [{clip_eps}, {}]", 1.0 - clip_eps);
        }
        let d_n = crate::sum::sum(p.iter().map(|p| p * (1.0 - p)));
        Self {
            n,
            big_n,
            units,
            p,
            clip_eps,
            clipped,
            d_n,
        }
    }

    /// Plan over units `0..p.len()` with the given probabilities, unclipped.
    /// Probabilities may sit on the boundary `{0, 1}`.
    pub fn from_probabilities(p: Vec<f64>, n: usize) -> Result<Self> {
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidInput("inclusion probabilities must lie in [0, 1]".into()));
        }
        let big_n = p.len();
        Ok(Self::assemble(n, big_n, (0..big_n).collect(), p, 0.0, false))
    }

    /// Target sub-sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn big_n(&self) -> usize {
        self.big_n
    }

    /// Units eligible for selection.
    pub fn units(&self) -> &[usize] {
        &self.units
    }

    /// Inclusion probability of each eligible unit, aligned with [`units`](Self::units).
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip_eps
    }

    /// Number of probabilities moved by clipping.
    pub fn clipped(&self) -> usize {
        self.clipped
    }

    pub fn expected_size(&self) -> f64 {
        crate::sum::sum(self.p.iter().copied())
    }

    /// `d_N = Σ pᵢ(1 - pᵢ)`.
    pub fn d_n(&self) -> f64 {
        self.d_n
    }

    /// Eligible units grouped by identical probability.
    fn blocks(&self) -> Vec<(f64, Vec<usize>)> {
        let mut order: Vec<usize> = (0..self.p.len()).collect();
        order.sort_by(|&a, &b| self.p[a].total_cmp(&self.p[b]).then(a.cmp(&b)));
        let mut blocks: Vec<(f64, Vec<usize>)> = Vec::new();
        for k in order {
            let p = self.p[k];
            match blocks.last_mut() {
                Some((q, members)) if q.to_bits() == p.to_bits() => members.push(k),
                _ => blocks.push((p, vec![k])),
            }
        }
        blocks
    }

    fn finish(&self, mut picked: Vec<usize>, design: DesignKind) -> SampleDraw {
        picked.sort_unstable();
        SampleDraw {
            units: picked.iter().map(|&k| self.units[k]).collect(),
            p: picked.iter().map(|&k| self.p[k]).collect(),
            design,
        }
    }
}

/// Returns `d_N`, warning when it is below [`D_N_WARNING`].
pub fn dn_diagnostic(plan: &InclusionPlan) -> f64 {
    let d = plan.d_n();
    if d < D_N_WARNING {
        log::warn!("d_N = {d:.3} < {D_N_WARNING}: rejective sampling is far from its asymptotic regime");
    }
    d
}

fn block_count<R: Rng + ?Sized>(size: usize, p: f64, rng: &mut R) -> usize {
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        size
    } else {
        Binomial::new(size as u64, p)
            .expect("probability inside (0, 1)")
            .sample(rng) as usize
    }
}

fn select_within<R: Rng + ?Sized>(members: &[usize], k: usize, rng: &mut R, out: &mut Vec<usize>) {
    if k == members.len() {
        out.extend_from_slice(members);
    } else if k > 0 {
        out.extend(index::sample(rng, members.len(), k).into_iter().map(|j| members[j]));
    }
}

/// Independent Bernoulli(`pᵢ`) inclusions.
pub fn poisson_sample<R: Rng + ?Sized>(plan: &InclusionPlan, rng: &mut R) -> SampleDraw {
    let mut picked = Vec::with_capacity(plan.n + plan.n / 4);
    for (p, members) in plan.blocks() {
        let k = block_count(members.len(), p, rng);
        select_within(&members, k, rng, &mut picked);
    }
    plan.finish(picked, DesignKind::Poisson)
}

/// A rejective draw together with the number of Poisson attempts it took.
#[derive(Debug, Clone)]
pub struct RejectiveDraw {
    pub draw: SampleDraw,
    pub attempts: usize,
}

/// Poisson sampling conditioned on `Σ εᵢ = n`, by acceptance-rejection.
pub fn rejective_sample<R: Rng + ?Sized>(
    plan: &InclusionPlan,
    rng: &mut R,
    max_attempts: usize,
) -> Result<SampleDraw> {
    rejective_sample_counted(plan, rng, max_attempts).map(|r| r.draw)
}

/// [`rejective_sample`] that also reports the number of attempts.
pub fn rejective_sample_counted<R: Rng + ?Sized>(
    plan: &InclusionPlan,
    rng: &mut R,
    max_attempts: usize,
) -> Result<RejectiveDraw> {
    if max_attempts == 0 {
        return Err(Error::InvalidInput("max_attempts must be at least 1".into()));
    }
    let blocks = plan.blocks();
    let mut counts = vec![0usize; blocks.len()];
    for attempt in 1..=max_attempts {
        let mut total = 0;
        for (c, (p, members)) in counts.iter_mut().zip(&blocks) {
            *c = block_count(members.len(), *p, rng);
            total += *c;
        }
        if total == plan.n {
            let mut picked = Vec::with_capacity(plan.n);
            for (&k, (_, members)) in counts.iter().zip(&blocks) {
                select_within(members, k, rng, &mut picked);
            }
            return Ok(RejectiveDraw {
                draw: plan.finish(picked, DesignKind::Rejective),
                attempts: attempt,
            });
        }
    }
    Err(Error::RejectiveInfeasible {
        n: plan.n,
        attempts: max_attempts,
    })
}

/// Pareto order sampling: rank units by `[U/(1-U)]·[(1-p)/p]` and keep the
/// `n` smallest. Ties go to the lower unit index.
pub fn pareto_sample<R: Rng + ?Sized>(plan: &InclusionPlan, rng: &mut R) -> SampleDraw {
    let n = plan.n.min(plan.p.len());
    let mut keys: Vec<(f64, usize)> = plan
        .p
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let u: f64 = rng.random();
            let key = if p >= 1.0 {
                0.0
            } else if p <= 0.0 {
                f64::INFINITY
            } else {
                u / (1.0 - u) * (1.0 - p) / p
            };
            (key, k)
        })
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < keys.len() && n > 0 {
        keys.select_nth_unstable_by(n - 1, by_key);
    }
    let picked = keys[..n].iter().map(|&(_, k)| k).collect();
    plan.finish(picked, DesignKind::Pareto)
}

/// Fixed-size design requested by a caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedSizeDesign {
    Rejective,
    Pareto,
}

/// Draws a fixed-size sample; rejective draws that exhaust `max_attempts`
/// fall back to Pareto sampling.
pub fn draw_fixed_size<R: Rng + ?Sized>(
    plan: &InclusionPlan,
    design: FixedSizeDesign,
    rng: &mut R,
    max_attempts: usize,
) -> SampleDraw {
    match design {
        FixedSizeDesign::Pareto => pareto_sample(plan, rng),
        FixedSizeDesign::Rejective => match rejective_sample(plan, rng, max_attempts) {
            Ok(draw) => draw,
            Err(e) => {
                log::warn!("{e}; falling back to Pareto sampling");
                pareto_sample(plan, rng)
            }
        },
    }
}

/// Exact rejective design obtained by enumeration.
#[derive(Debug, Clone)]
pub struct ExactDesign {
    /// Every subset of size `n` with its probability.
    pub subsets: Vec<(Vec<usize>, f64)>,
    /// First-order inclusion probabilities `πᵢ`.
    pub inclusion: Vec<f64>,
}

/// Largest `N` accepted by [`exact_rejective_design`].
pub const MAX_ENUMERATION: usize = 20;

/// Enumerates the rejective design: `P(s) ∝ Π_{i∈s} pᵢ Π_{j∉s} (1 - pⱼ)` over
/// subsets `s` of size `n`.
pub fn exact_rejective_design(p: &[f64], n: usize) -> Result<ExactDesign> {
    let big_n = p.len();
    if big_n > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge {
            big_n,
            max: MAX_ENUMERATION,
        });
    }
    if n > big_n {
        return Err(Error::SampleSizeTooLarge { n, big_n });
    }
    let mut subsets = Vec::new();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << big_n) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut weight = 1.0;
        let mut members = Vec::with_capacity(n);
        for (i, &pi) in p.iter().enumerate() {
            if mask >> i & 1 == 1 {
                weight *= pi;
                members.push(i);
            } else {
                weight *= 1.0 - pi;
            }
        }
        total += weight;
        subsets.push((members, weight));
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("no subset of size n has positive probability".into()));
    }
    let mut inclusion = vec![0.0; big_n];
    for (members, w) in subsets.iter_mut() {
        *w /= total;
        for &i in members.iter() {
            inclusion[i] += *w;
        }
    }
    Ok(ExactDesign { subsets, inclusion })
}

/// Empirical metric `ρ_N(f, f') = sqrt((1/N) Σ (f(Oᵢ) - f'(Oᵢ))²)`.
pub fn empirical_metric_rho<F, G>(dataset: &Dataset, f: F, g: G) -> f64
where
    F: Fn(ObsRef<'_>) -> f64,
    G: Fn(ObsRef<'_>) -> f64,
{
    dataset.mean(|o| (f(o) - g(o)).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fixtures::indexed, ExposureKind, OutcomeRange, OutcomeScale, StratumDomain};
    use crate::rng::stream;
    use crate::stats::chi_square_gof;
    use std::collections::HashMap;

    fn stratified(counts: &[usize]) -> Dataset {
        let mut b = Dataset::builder(0, ExposureKind::Binary, StratumDomain::numbered(counts.len()));
        for (v, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                b.push_parts(&[], 0.0, 0.0, v as u32).unwrap();
            }
        }
        b.build(OutcomeRange::Fixed(OutcomeScale::identity())).unwrap()
    }

    #[test]
    fn uniform_plan_probabilities() {
        let ds = indexed(10_000);
        let plan = make_plan(&ds, &SamplingFunction::uniform(1), 100).unwrap();
        assert!(plan.probabilities().iter().all(|&p| p == 0.01));
        assert!((plan.expected_size() - 100.0).abs() < 1e-9);
        assert_eq!(plan.clipped(), 0);
    }

    #[test]
    fn plan_clips_at_one() {
        let ds = stratified(&[5, 5]);
        let h = SamplingFunction::new(vec![2.0, 1e-9]).unwrap();
        let plan = make_plan(&ds, &h, 5).unwrap();
        assert_eq!(plan.clipped(), 10);
        assert!(plan.probabilities()[..5].iter().all(|&p| p == 1.0 - CLIP_EPS));
        assert!(plan.probabilities()[5..].iter().all(|&p| p == CLIP_EPS));
    }

    #[test]
    fn plan_rejects_bad_inputs() {
        let ds = stratified(&[3, 3]);
        let h = SamplingFunction::uniform(2);
        assert!(matches!(make_plan(&ds, &h, 6), Err(Error::SampleSizeTooLarge { .. })));
        assert!(make_plan(&ds, &SamplingFunction::uniform(3), 2).is_err());
    }

    #[test]
    fn study_h3_is_proportional_within_strata() {
        let ds = stratified(&[100, 200, 300]);
        let h = SamplingFunction::new(vec![4.66, 0.53, 0.09]).unwrap();
        let plan = make_plan(&ds, &h, 60).unwrap();
        let p = plan.probabilities();
        assert!((p[0] - 60.0 * 4.66 / 600.0).abs() < 1e-15);
        assert!((p[150] / p[0] - 0.53 / 4.66).abs() < 1e-12);
        assert!((p[599] / p[150] - 0.09 / 0.53).abs() < 1e-12);
    }

    #[test]
    fn excluded_units_are_never_eligible() {
        let ds = indexed(100);
        let plan = make_plan_excluding(&ds, &SamplingFunction::uniform(1), 10, &[3, 50]).unwrap();
        assert_eq!(plan.units().len(), 98);
        assert!(!plan.units().contains(&3) && !plan.units().contains(&50));
        assert_eq!(plan.probabilities()[0], 0.1);
    }

    #[test]
    fn degenerate_poisson_draws() {
        let mut rng = stream(1, 0);
        let all = InclusionPlan::from_probabilities(vec![1.0; 7], 7).unwrap();
        assert_eq!(poisson_sample(&all, &mut rng).units, (0..7).collect::<Vec<_>>());
        let none = InclusionPlan::from_probabilities(vec![CLIP_EPS; 50], 1).unwrap();
        assert!(poisson_sample(&none, &mut rng).units.len() <= 1);
    }

    #[test]
    fn poisson_mean_size() {
        let mut rng = stream(2, 0);
        let p: Vec<f64> = (0..100).map(|i| 0.05 + 0.9 * (i as f64 / 99.0)).collect();
        let expected: f64 = p.iter().sum();
        let var: f64 = p.iter().map(|p| p * (1.0 - p)).sum();
        let plan = InclusionPlan::from_probabilities(p, 50).unwrap();
        let reps = 10_000;
        let mean = (0..reps)
            .map(|_| poisson_sample(&plan, &mut rng).units.len() as f64)
            .sum::<f64>()
            / reps as f64;
        let se = (var / reps as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected}");
    }

    #[test]
    fn exact_design_two_units() {
        let d = exact_rejective_design(&[0.9, 0.1], 1).unwrap();
        let p1 = d.subsets.iter().find(|(s, _)| s == &vec![0]).unwrap().1;
        assert!((p1 - 0.81 / 0.82).abs() < 1e-15);
        assert!((p1 - 0.9878).abs() < 1e-4);
    }

    #[test]
    fn exact_design_equal_p_is_uniform() {
        let d = exact_rejective_design(&[0.3; 6], 3).unwrap();
        assert_eq!(d.subsets.len(), 20);
        assert!(d.subsets.iter().all(|(_, w)| (w - 0.05).abs() < 1e-14));
    }

    #[test]
    fn exact_design_rejects_large_n() {
        assert!(matches!(
            exact_rejective_design(&[0.5; 21], 3),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    fn subset_frequencies(
        plan: &InclusionPlan,
        reps: usize,
        seed: u64,
        mut sampler: impl FnMut(&InclusionPlan, &mut crate::rng::StreamRng) -> SampleDraw,
    ) -> HashMap<Vec<usize>, u64> {
        let mut rng = stream(seed, 0);
        let mut freq = HashMap::new();
        for _ in 0..reps {
            let d = sampler(plan, &mut rng);
            assert_eq!(d.units.len(), plan.n());
            *freq.entry(d.units).or_insert(0) += 1;
        }
        freq
    }

    #[test]
    fn rejective_matches_enumeration() {
        let p = vec![0.8, 0.6, 0.4, 0.2];
        let exact = exact_rejective_design(&p, 2).unwrap();
        let plan = InclusionPlan::from_probabilities(p, 2).unwrap();
        let freq = subset_frequencies(&plan, 100_000, 3, |pl, r| rejective_sample(pl, r, 1000).unwrap());
        let observed: Vec<u64> = exact.subsets.iter().map(|(s, _)| *freq.get(s).unwrap_or(&0)).collect();
        let probs: Vec<f64> = exact.subsets.iter().map(|(_, w)| *w).collect();
        let gof = chi_square_gof(&observed, &probs).unwrap();
        assert!(gof.p_value > 0.001, "{gof:?}");
    }

    #[test]
    fn uniform_rejective_and_pareto_are_uniform_over_subsets() {
        let plan = InclusionPlan::from_probabilities(vec![0.4; 5], 2).unwrap();
        let probs = vec![0.1; 10];
        for (seed, freq) in [
            (4, subset_frequencies(&plan, 100_000, 4, |pl, r| rejective_sample(pl, r, 1000).unwrap())),
            (5, subset_frequencies(&plan, 100_000, 5, |pl, r| pareto_sample(pl, r))),
        ] {
            assert_eq!(freq.len(), 10, "seed {seed}");
            let observed: Vec<u64> = freq.values().copied().collect();
            let gof = chi_square_gof(&observed, &probs).unwrap();
            assert!(gof.p_value > 0.001, "seed {seed}: {gof:?}");
        }
    }

    #[test]
    fn rejective_infeasible_is_reported() {
        let plan = InclusionPlan::from_probabilities(vec![0.5; 4], 4).unwrap();
        let mut rng = stream(6, 0);
        // P(all four) = 1/16, so a single attempt fails most of the time.
        let failures = (0..200)
            .filter(|_| matches!(rejective_sample(&plan, &mut rng, 1), Err(Error::RejectiveInfeasible { .. })))
            .count();
        assert!(failures > 150);
        let d = draw_fixed_size(&plan, FixedSizeDesign::Rejective, &mut rng, 1);
        assert_eq!(d.units.len(), 4);
    }

    #[test]
    fn acceptance_rate_matches_local_limit() {
        let p: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.05 } else { 0.15 }).collect();
        let plan = InclusionPlan::from_probabilities(p, 20).unwrap();
        let mut rng = stream(9, 0);
        let mut attempts = 0;
        let mut accepted = 0;
        while attempts < 10_000 {
            attempts += rejective_sample_counted(&plan, &mut rng, 100_000).unwrap().attempts;
            accepted += 1;
        }
        let rate = accepted as f64 / attempts as f64;
        let limit = (2.0 * std::f64::consts::PI * plan.d_n()).powf(-0.5);
        assert!(rate > limit / 2.0 && rate < limit * 2.0, "{rate} vs {limit}");
    }

    #[test]
    fn pareto_near_certain_unit_is_included() {
        let mut p = vec![0.05; 40];
        p[7] = 1.0 - 1e-9;
        let plan = InclusionPlan::from_probabilities(p, 3).unwrap();
        let mut rng = stream(7, 0);
        for _ in 0..1000 {
            assert!(pareto_sample(&plan, &mut rng).units.contains(&7));
        }
    }

    #[test]
    fn pareto_inclusion_close_to_target() {
        // N = 12 keeps the enumeration oracle cheap.
        let p: Vec<f64> = (0..12).map(|i| 0.1 + 0.6 * i as f64 / 11.0).collect();
        let total: f64 = p.iter().sum();
        let n = 4;
        let p: Vec<f64> = p.iter().map(|x| x * n as f64 / total).collect();
        let exact = exact_rejective_design(&p, n).unwrap();
        let plan = InclusionPlan::from_probabilities(p, n).unwrap();
        let reps = 100_000;
        let mut counts = vec![0u64; 12];
        let mut rng = stream(8, 0);
        for _ in 0..reps {
            for u in pareto_sample(&plan, &mut rng).units {
                counts[u] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let f = c as f64 / reps as f64;
            let target = plan.probabilities()[i];
            let se = (target * (1.0 - target) / reps as f64).sqrt();
            assert!((f - target).abs() < 3.0 * se + 0.01, "unit {i}: {f} vs {target}");
            // The rejective design with the same p shrinks inclusion toward n/N.
            let gap = (exact.inclusion[i] - target).abs();
            assert!(gap < 0.03, "unit {i}: rejective {} vs {target}", exact.inclusion[i]);
        }
    }

    #[test]
    fn dn_values() {
        let plan = InclusionPlan::from_probabilities(vec![0.5; 100], 50).unwrap();
        assert_eq!(dn_diagnostic(&plan), 25.0);
        let zero = InclusionPlan::from_probabilities(vec![0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(dn_diagnostic(&zero), 0.0);
        // Study scale: h ≡ 1, N = 10⁷, n = 10³.
        let n: f64 = 1e3;
        let big_n: f64 = 1e7;
        let p = n / big_n;
        assert!((big_n * p * (1.0 - p) - 999.9).abs() < 1e-6);
    }

    #[test]
    fn rho_examples() {
        let ds = indexed(100);
        assert_eq!(empirical_metric_rho(&ds, |o| o.w[0], |o| o.w[0]), 0.0);
        let r = empirical_metric_rho(&ds, |o| o.w[0] + 2.5, |o| o.w[0]);
        assert!((r - 2.5).abs() < 1e-12);
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_design_is_a_distribution(
            raw in proptest::collection::vec(0.05f64..0.95, 3..9),
            frac in 0.2f64..0.8,
        ) {
            let n = ((raw.len() as f64 * frac) as usize).clamp(1, raw.len() - 1);
            let d = exact_rejective_design(&raw, n).unwrap();
            let total: f64 = d.subsets.iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(d.subsets.iter().all(|(_, w)| *w >= 0.0));
            let pi_sum: f64 = d.inclusion.iter().sum();
            prop_assert!((pi_sum - n as f64).abs() < 1e-10);
            prop_assert!(d.inclusion.iter().all(|&x| x > 0.0 && x < 1.0));
        }

        #[test]
        fn fixed_size_designs_return_n(seed in 0u64..1000, n in 1usize..20) {
            let p: Vec<f64> = (0..60).map(|i| (1 + i % 3) as f64).collect();
            let total: f64 = p.iter().sum();
            let p: Vec<f64> = p.iter().map(|x| x * n as f64 / total).collect();
            let plan = InclusionPlan::from_probabilities(p, n).unwrap();
            let mut rng = stream(seed, 1);
            prop_assert_eq!(pareto_sample(&plan, &mut rng).units.len(), n);
            prop_assert_eq!(draw_fixed_size(&plan, FixedSizeDesign::Rejective, &mut rng, 1000).units.len(), n);
        }
    }
}
