//! Distribution helpers over `statrs`, plus a chi-square goodness-of-fit test
//! and the Jarque-Bera normality test.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile `ξ_q`.
pub fn normal_quantile(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "quantile level must lie in (0, 1), got {q}");
    Normal::standard().inverse_cdf(q)
}

/// Survival function of the chi-square distribution.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .sf(x)
}

/// Result of a goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GofTest> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::InvalidInput(
            "chi-square test needs matching counts and probabilities over >= 2 cells".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(probs) {
        if p <= 0.0 {
            if o > 0 {
                return Ok(GofTest {
                    statistic: f64::INFINITY,
                    dof: observed.len() - 1,
                    p_value: 0.0,
                });
            }
            continue;
        }
        let e = p * total as f64;
        statistic += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    let dof = cells - 1;
    Ok(GofTest {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof as f64),
    })
}

/// Outcome of [`jarque_bera`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when the input has zero spread; the p-value is then 0.
    pub degenerate: bool,
}

/// Jarque-Bera omnibus normality test; the p-value uses the asymptotic
/// chi-square(2) law, whose survival function is `exp(-x/2)`.
pub fn jarque_bera(xs: &[f64]) -> Result<NormalityTest> {
    if xs.len() < 20 {
        return Err(Error::InvalidInput(format!(
            "normality diagnostic needs at least 20 values, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = crate::sum::sum(xs.iter().copied()) / n;
    let m = |k: i32| crate::sum::sum(xs.iter().map(|x| (x - mean).powi(k))) / n;
    let m2 = m(2);
    if m2 <= f64::EPSILON * mean.abs().max(1.0) * f64::EPSILON {
        return Ok(NormalityTest {
            statistic: f64::INFINITY,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let skew = m(3) / m2.powf(1.5);
    let kurt = m(4) / (m2 * m2);
    let statistic = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    Ok(NormalityTest {
        statistic,
        p_value: (-statistic / 2.0).exp(),
        degenerate: false,
    })
}
