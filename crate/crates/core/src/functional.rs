//! Both variable-importance parameters and their influence curves on
//! finitely supported measures, computed by direct enumeration.
//!
//! These are the reference implementations the estimators are checked
//! against; nothing here is fitted.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Point mass at `(w, a, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub w: f64,
    pub a: f64,
    pub y: f64,
    pub mass: f64,
}

/// A probability measure on finitely many `(W, A, Y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

fn key(x: f64) -> u64 {
    x.to_bits()
}

impl DiscreteMeasure {
    /// Normalizes the masses to sum to one.
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if atoms.iter().any(|a| !(a.mass >= 0.0)) || !(total > 0.0) {
            return Err(Error::InvalidInput("atom masses must be non-negative with a positive total".into()));
        }
        for at in &mut atoms {
            at.mass /= total;
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `E_P f(O)`.
    pub fn expect<F: Fn(&Atom) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|at| at.mass * f(at)).sum()
    }

    fn mass_where<F: Fn(&Atom) -> bool>(&self, pred: F) -> f64 {
        self.atoms.iter().filter(|at| pred(at)).map(|at| at.mass).sum()
    }

    /// Marginal law of `W`.
    pub fn marginal_w(&self) -> Vec<(f64, f64)> {
        let mut m: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
        for at in &self.atoms {
            m.entry(key(at.w)).or_insert((at.w, 0.0)).1 += at.mass;
        }
        m.into_values().collect()
    }

    /// Support of `A` given `W = w`.
    pub fn exposures_at(&self, w: f64) -> Vec<f64> {
        let mut xs: Vec<f64> = self.atoms.iter().filter(|at| at.w == w && at.mass > 0.0).map(|at| at.a).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    /// `E_P[Y | A = a, W = w]`.
    pub fn q(&self, a: f64, w: f64) -> Result<f64> {
        let m = self.mass_where(|at| at.w == w && at.a == a);
        if !(m > 0.0) {
            return Err(Error::Positivity(format!("no mass at (a, w) = ({a}, {w})")));
        }
        let num: f64 = self
            .atoms
            .iter()
            .filter(|at| at.w == w && at.a == a)
            .map(|at| at.mass * at.y)
            .sum();
        Ok(num / m)
    }

    /// `P(A = a | W = w)`.
    pub fn g(&self, a: f64, w: f64) -> f64 {
        self.mass_where(|at| at.w == w && at.a == a) / self.mass_where(|at| at.w == w)
    }

    /// `E_P[A | W = w]`.
    pub fn mu(&self, w: f64) -> f64 {
        let m = self.mass_where(|at| at.w == w);
        self.atoms.iter().filter(|at| at.w == w).map(|at| at.mass * at.a).sum::<f64>() / m
    }

    /// `E_P A²`.
    pub fn zeta2(&self) -> f64 {
        self.expect(|at| at.a * at.a)
    }

    /// `E_P[Q(1, W) - Q(0, W)]`.
    pub fn psi_b(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (w, m) in self.marginal_w() {
            acc += m * (self.q(1.0, w)? - self.q(0.0, w)?);
        }
        Ok(acc)
    }

    /// `E_P[A(Q(A, W) - Q(0, W))] / E_P A²`.
    pub fn psi_c(&self) -> Result<f64> {
        let mut num = 0.0;
        for at in &self.atoms {
            if at.a != 0.0 {
                num += at.mass * at.a * (self.q(at.a, at.w)? - self.q(0.0, at.w)?);
            }
        }
        Ok(num / self.zeta2())
    }

    /// Binary-exposure influence curve at `o`.
    pub fn influence_b(&self, o: &Atom) -> Result<f64> {
        let psi = self.psi_b()?;
        let (q1, q0) = (self.q(1.0, o.w)?, self.q(0.0, o.w)?);
        let qa = if o.a == 1.0 { q1 } else { q0 };
        Ok((2.0 * o.a - 1.0) / self.g(o.a, o.w) * (o.y - qa) + q1 - q0 - psi)
    }

    /// Continuous-exposure influence curve at `o`.
    pub fn influence_c(&self, o: &Atom) -> Result<f64> {
        let psi = self.psi_c()?;
        let z2 = self.zeta2();
        let (qa, q0) = (self.q(o.a, o.w)?, self.q(0.0, o.w)?);
        let h = if o.a == 0.0 { -self.mu(o.w) / self.g(0.0, o.w) } else { o.a };
        Ok((o.a * (qa - q0 - o.a * psi) + (o.y - qa) * h) / z2)
    }
}

/// `Ψ(P) - Ψ(P') + P' D(P)` for the binary parameter, by enumeration.
pub fn remainder_b_enumerated(p: &DiscreteMeasure, p_prime: &DiscreteMeasure) -> Result<f64> {
    let mut pd = 0.0;
    for at in p_prime.atoms() {
        pd += at.mass * p.influence_b(at)?;
    }
    Ok(p.psi_b()? - p_prime.psi_b()? + pd)
}

/// Closed form `P'[(2A - 1)(Q' - Q)(1/g - 1/g')]`.
pub fn remainder_b_closed(p: &DiscreteMeasure, p_prime: &DiscreteMeasure) -> Result<f64> {
    let mut acc = 0.0;
    for at in p_prime.atoms() {
        let dq = p_prime.q(at.a, at.w)? - p.q(at.a, at.w)?;
        acc += at.mass * (2.0 * at.a - 1.0) * dq * (1.0 / p.g(at.a, at.w) - 1.0 / p_prime.g(at.a, at.w));
    }
    Ok(acc)
}

/// `Ψᶜ(P) - Ψᶜ(P') + P' Dᶜ(P)`, by enumeration.
pub fn remainder_c_enumerated(p: &DiscreteMeasure, p_prime: &DiscreteMeasure) -> Result<f64> {
    let mut pd = 0.0;
    for at in p_prime.atoms() {
        pd += at.mass * p.influence_c(at)?;
    }
    Ok(p.psi_c()? - p_prime.psi_c()? + pd)
}

/// Closed form
/// `(1 - ζ'²/ζ²)(ψ - ψ') + P'[(Q'(0,W) - Q(0,W))(μ' - μ g'(0|W)/g(0|W))] / ζ²`.
pub fn remainder_c_closed(p: &DiscreteMeasure, p_prime: &DiscreteMeasure) -> Result<f64> {
    let (z2, z2p) = (p.zeta2(), p_prime.zeta2());
    let (psi, psip) = (p.psi_c()?, p_prime.psi_c()?);
    let mut acc = 0.0;
    for (w, m) in p_prime.marginal_w() {
        let dq0 = p_prime.q(0.0, w)? - p.q(0.0, w)?;
        acc += m * dq0 * (p_prime.mu(w) - p.mu(w) * p_prime.g(0.0, w) / p.g(0.0, w));
    }
    Ok((1.0 - z2p / z2) * (psi - psip) + acc / z2)
}

/// Random measure on the grid `ws × exposures`, one atom per cell with a
/// uniform outcome in (0, 1) and a mass bounded away from zero.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, ws: &[f64], exposures: &[f64]) -> DiscreteMeasure {
    let mut atoms = Vec::with_capacity(ws.len() * exposures.len());
    for &w in ws {
        for &a in exposures {
            atoms.push(Atom {
                w,
                a,
                y: rng.random_range(0.02..0.98),
                mass: rng.random_range(0.2..1.0),
            });
        }
    }
    DiscreteMeasure::new(atoms).expect("positive masses")
}

/// `argmin_β E_P[(Q(A,W) - Q(0,W) - βA)²]` as a one-column weighted least
/// squares problem solved by SVD.
pub fn psi_c_least_squares(p: &DiscreteMeasure) -> Result<f64> {
    let n = p.atoms().len();
    let mut x = nalgebra::DMatrix::zeros(n, 1);
    let mut y = nalgebra::DVector::zeros(n);
    for (i, at) in p.atoms().iter().enumerate() {
        let s = at.mass.sqrt();
        x[(i, 0)] = s * at.a;
        y[i] = s * (p.q(at.a, at.w)? - p.q(0.0, at.w)?);
    }
    let beta = x
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(beta[0])
}
