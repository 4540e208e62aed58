//! The discrete functional `f̃_ε(u) = ½‖u‖² + ½∫V(εx)u² − 1/(p+1)∫K(εx)u₊^{p+1}`
//! on one grid, with its gradient and Hessian.
//!
//! Gradients are returned as dual vectors `F(u) = A u + V u − K u₊^p`; the
//! actual derivative is `hⁿ F(u)·v`, and its `W^{1,2}` norm is
//! `sqrt(hⁿ Fᵀ A⁻¹ F)`.

use alloc::vec::Vec;
use num_traits::Float;

use crate::discretize::{Discretization, Field, Grid, LinearOperator, ShiftedLaplacian};
use crate::error::Result;
use crate::linalg::dot;
use crate::scenario::Scenario;

/// `max(x, 0)^p`, with integer powers done by multiplication.
#[inline]
pub fn pos_pow(x: f64, p: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if p == 3.0 {
        x * x * x
    } else if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub disc: Discretization,
    pub p: f64,
    pub epsilon: f64,
    /// `V(εx)` at the interior nodes.
    pub v: Vec<f64>,
    /// `K(εx)` at the interior nodes.
    pub k: Vec<f64>,
}

impl DiscreteProblem {
    pub fn new(scenario: &Scenario, epsilon: f64, disc: Discretization) -> Result<Self> {
        let g = disc.grid;
        let mut scaled = [0.0; 3];
        let mut v = Vec::with_capacity(g.len());
        let mut k = Vec::with_capacity(g.len());
        for idx in 0..g.len() {
            let x = g.point(idx);
            for i in 0..g.n {
                scaled[i] = epsilon * x[i];
            }
            v.push(scenario.v.eval(&scaled[..g.n])?);
            k.push(scenario.k.eval(&scaled[..g.n])?);
        }
        Ok(Self {
            disc,
            p: scenario.p,
            epsilon,
            v,
            k,
        })
    }

    /// Constant coefficients `V ≡ v0`, `K ≡ k0` (the frozen problem).
    pub fn frozen(disc: Discretization, p: f64, v0: f64, k0: f64) -> Self {
        let len = disc.grid.len();
        Self {
            disc,
            p,
            epsilon: 0.0,
            v: alloc::vec![v0; len],
            k: alloc::vec![k0; len],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.disc.grid
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let au = self.disc.apply_gram(u);
        let p = self.p;
        let mut quad = 0.0;
        let mut pot = 0.0;
        let mut nl = 0.0;
        for i in 0..u.len() {
            quad += u[i] * au[i];
            pot += self.v[i] * u[i] * u[i];
            nl += self.k[i] * pos_pow(u[i], p + 1.0);
        }
        self.grid().cell() * (0.5 * quad + 0.5 * pot - nl / (p + 1.0))
    }

    /// Dual gradient `F(u) = A u + V u − K u₊^p`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut f = self.disc.apply_gram(u);
        for i in 0..u.len() {
            f[i] += self.v[i] * u[i] - self.k[i] * pos_pow(u[i], self.p);
        }
        f
    }

    /// `A + diag(V − p K u₊^{p−1})`.
    pub fn jacobian(&self, u: &[f64]) -> ShiftedLaplacian {
        let p = self.p;
        let diag = (0..u.len())
            .map(|i| self.v[i] - p * self.k[i] * pos_pow(u[i], p - 1.0))
            .collect();
        ShiftedLaplacian { grid: *self.grid(), diag }
    }

    /// `‖∇f̃_ε(u)‖` in `W^{1,2}`.
    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        self.disc.dual_norm(&self.gradient(u))
    }

    /// `‖u‖` in `W^{1,2}`.
    pub fn norm(&self, u: &[f64]) -> f64 {
        let au = self.disc.apply_gram(u);
        (self.grid().cell() * dot(u, &au)).max(0.0).sqrt()
    }

    /// Rayleigh quotient `(L_u v|v)/‖v‖²`.
    pub fn rayleigh(&self, u: &[f64], v: &[f64]) -> f64 {
        let j = self.jacobian(u);
        let mut jv = alloc::vec![0.0; v.len()];
        j.apply(v, &mut jv);
        let av = self.disc.apply_gram(v);
        dot(v, &jv) / dot(v, &av)
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        Field::from_values(*self.grid(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_has_zero_energy_and_gradient() {
        let g = Grid::symmetric(1, 10.0, 101, 4).unwrap();
        let d = Discretization::new(g).unwrap();
        let prob = DiscreteProblem::frozen(d, 3.0, 0.2, 1.0);
        let u = alloc::vec![0.0; g.len()];
        assert_eq!(prob.energy(&u), 0.0);
        assert_eq!(prob.residual_norm(&u), 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference_of_energy() {
        let g = Grid::symmetric(1, 8.0, 81, 4).unwrap();
        let d = Discretization::new(g).unwrap();
        let prob = DiscreteProblem::frozen(d, 2.5, 0.3, 1.2);
        let u: Vec<f64> = (0..g.len()).map(|i| 1.3 / g.point(i)[0].cosh()).collect();
        let dir: Vec<f64> = (0..g.len()).map(|i| (-(g.point(i)[0] - 0.5).powi(2)).exp()).collect();
        let f = prob.gradient(&u);
        let analytic = g.cell() * dot(&f, &dir);
        let t = 1e-5;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
        let fd = (prob.energy(&shift(t)) - prob.energy(&shift(-t))) / (2.0 * t);
        assert!((fd - analytic).abs() < 1e-8 * analytic.abs().max(1.0));
    }
}
