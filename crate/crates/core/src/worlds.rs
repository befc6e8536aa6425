//! Small synthetic populations with known nuisances, used by tests, the
//! oracle battery and the examples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, ExposureKind, OutcomeRange, OutcomeScale, StratumDomain, StratumId};
use crate::glm::expit;
use crate::rng::stream;

/// `P(A = 1 | W = w)` in the logistic world.
pub fn logistic_g(w: f64) -> f64 {
    expit(0.3 + 0.8 * w)
}

/// `E[Y | A = a, W = w]` in the logistic world.
pub fn logistic_q(a: f64, w: f64) -> f64 {
    expit(-0.2 + 0.6 * a + 0.7 * w * w - 0.4 * a * w)
}

/// `E[Q(1, W) - Q(0, W)]` with `W ~ N(0, 1)`, by the trapezoid rule on [-12, 12].
pub fn logistic_psi() -> f64 {
    let m = 200_000;
    let step = 24.0 / m as f64;
    let mut acc = 0.0;
    for i in 0..=m {
        let w = -12.0 + i as f64 * step;
        let weight = if i == 0 || i == m { 0.5 } else { 1.0 };
        let dens = (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
        acc += weight * dens * (logistic_q(1.0, w) - logistic_q(0.0, w));
    }
    acc * step
}

/// Binary exposure, binary outcome, `W ~ N(0, 1)`, two strata split at `W = 0`.
pub fn logistic_world(seed: u64, big_n: usize) -> Dataset {
    logistic_world_with(seed, big_n, 2, |w, _| StratumId::from(w > 0.0))
}

/// [`logistic_world`] with a caller-chosen stratum rule `(w, u) ↦ v`, where
/// `u` is an independent uniform draw.
pub fn logistic_world_with<F>(seed: u64, big_n: usize, strata: usize, rule: F) -> Dataset
where
    F: Fn(f64, f64) -> StratumId,
{
    let mut rng = stream(seed, 11);
    let mut b = Dataset::builder(1, ExposureKind::Binary, StratumDomain::numbered(strata));
    for _ in 0..big_n {
        let w: f64 = StandardNormal.sample(&mut rng);
        let a = if rng.random::<f64>() < logistic_g(w) { 1.0 } else { 0.0 };
        let y = if rng.random::<f64>() < logistic_q(a, w) { 1.0 } else { 0.0 };
        let u: f64 = rng.random();
        b.push_parts(&[w], a, y, rule(w, u))
            .expect("generated rows are valid");
    }
    b.build(OutcomeRange::Fixed(OutcomeScale::identity()))
        .expect("generated data set is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_by_quadrature_matches_monte_carlo() {
        let mut rng = stream(5, 0);
        let m = 400_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let w: f64 = StandardNormal.sample(&mut rng);
            acc += logistic_q(1.0, w) - logistic_q(0.0, w);
        }
        let mc = acc / m as f64;
        // The contrast is bounded by 1, so the MC error is below 3/√m.
        assert!((mc - logistic_psi()).abs() < 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn same_seed_same_population() {
        let a = logistic_world(9, 100);
        let b = logistic_world(9, 100);
        for i in 0..100 {
            assert_eq!(a.obs(i).w, b.obs(i).w);
            assert_eq!(a.obs(i).y, b.obs(i).y);
        }
    }
}
