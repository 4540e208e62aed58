//! The concentrated ansatz `z_ξ(x) = a·U(b|x − ξ|)` and its tangent fields.
//!
//! The scalings solve the frozen equation
//! `−Δz + (1 + V(εξ))z = K(εξ)z^p`, which gives
//! `b = (1 + V(εξ))^{1/2}` and `a = ((1 + V(εξ))/K(εξ))^{1/(p−1)}`.

use alloc::format;
use alloc::vec::Vec;
use num_traits::Float;

use crate::discretize::{Discretization, Field, Grid, MAX_DIM};
use crate::error::{Error, Result};
use crate::problem::DiscreteProblem;
use crate::profile::RadialProfile;
use crate::scenario::Scenario;

/// Largest admissible `h·b`.
pub const RESOLUTION_GUARD: f64 = 0.5;
/// Largest admissible `z/a` on the outermost interior nodes.
pub const BOUNDARY_LEVEL: f64 = 1e-8;

/// `(a, b)` for the frozen coefficients `V(εξ)`, `K(εξ)`.
pub fn scaling(v_val: f64, k_val: f64, p: f64) -> Result<(f64, f64)> {
    if !(1.0 + v_val > 0.0) {
        return Err(Error::Hypothesis(format!("1 + V = {} must be positive", 1.0 + v_val)));
    }
    if !(k_val > 0.0) {
        return Err(Error::Hypothesis(format!("K = {k_val} must be positive")));
    }
    let b2 = 1.0 + v_val;
    Ok(((b2 / k_val).powf(1.0 / (p - 1.0)), b2.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnsatzContext {
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub xi: [f64; MAX_DIM],
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub theta: f64,
    /// `V(εξ)`
    pub v_xi: f64,
    /// `K(εξ)`
    pub k_xi: f64,
}

impl AnsatzContext {
    pub fn new(scenario: &Scenario, epsilon: f64, xi: &[f64]) -> Result<Self> {
        let n = scenario.n;
        if xi.len() != n {
            return Err(Error::Invalid(format!("ξ has {} coordinates, expected {n}", xi.len())));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Invalid(format!("ε = {epsilon} must be positive")));
        }
        let mut x = [0.0; MAX_DIM];
        let mut pt = [0.0; MAX_DIM];
        for i in 0..n {
            x[i] = xi[i];
            pt[i] = epsilon * xi[i];
        }
        let v_xi = scenario.v.eval(&pt[..n])?;
        let k_xi = scenario.k.eval(&pt[..n])?;
        let (a, b) = scaling(v_xi, k_xi, scenario.p)?;
        Ok(Self {
            n,
            p: scenario.p,
            epsilon,
            xi: x,
            a,
            b,
            gamma: scenario.gamma(),
            theta: scenario.theta(),
            v_xi,
            k_xi,
        })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi[..self.n]
    }

    /// Same ε, different ξ.
    pub fn moved(&self, scenario: &Scenario, xi: &[f64]) -> Result<Self> {
        Self::new(scenario, self.epsilon, xi)
    }
}

/// Grid spacing, stencil order and truncation level of the windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub h: f64,
    pub order: usize,
    /// The window edge sits where `U(b·r) = tail·U(0)`.
    pub tail: f64,
}

impl Resolution {
    /// Defaults per dimension, chosen so discretization errors stay below the
    /// quantities measured by the reduction at ε ≥ 0.025.
    pub fn default_for(n: usize) -> Self {
        match n {
            1 => Self { h: 0.04, order: 8, tail: 1e-10 },
            2 => Self { h: 0.2, order: 8, tail: 2e-9 },
            _ => Self { h: 0.35, order: 4, tail: 5e-9 },
        }
    }
}

/// Radius where the profile falls to `tail·U(0)`.
pub fn tail_radius(profile: &RadialProfile, tail: f64) -> f64 {
    let target = tail * profile.peak();
    let (mut lo, mut hi) = (0.0, profile.r_max);
    while profile.eval(hi) > target {
        lo = hi;
        hi *= 1.5;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if profile.eval(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Box around `center` on which every ansatz with width at least `b_min`
/// has decayed to `tail·a·U(0)` at the boundary.
pub fn window(profile: &RadialProfile, center: &[f64], b_min: f64, res: Resolution) -> Result<Grid> {
    let radius = tail_radius(profile, res.tail) / b_min + (res.order / 2) as f64 * res.h;
    Grid::window(center.len(), center, radius, res.h, res.order)
}

/// `z_ξ` and the translation tangents `−∂_{x_i} z_ξ` on one grid.
#[derive(Debug, Clone)]
pub struct Ansatz {
    pub z: Field,
    pub tangents: Vec<Field>,
}

pub fn build(ctx: &AnsatzContext, profile: &RadialProfile, grid: Grid) -> Result<Ansatz> {
    if grid.n != ctx.n {
        return Err(Error::GridMismatch(format!("grid in ℝ^{}, ansatz in ℝ^{}", grid.n, ctx.n)));
    }
    if grid.h * ctx.b > RESOLUTION_GUARD {
        return Err(Error::GridTooSmall(format!(
            "h·b = {:.3} exceeds {RESOLUTION_GUARD}",
            grid.h * ctx.b
        )));
    }
    let n = ctx.n;
    let len = grid.len();
    let mut z = Vec::with_capacity(len);
    let mut tangents: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(len)).collect();
    for idx in 0..len {
        let x = grid.point(idx);
        let mut r2 = 0.0;
        for i in 0..n {
            r2 += (x[i] - ctx.xi[i]).powi(2);
        }
        let r = r2.sqrt();
        z.push(ctx.a * profile.eval(ctx.b * r));
        let du = ctx.a * ctx.b * profile.deriv(ctx.b * r);
        for i in 0..n {
            let t = if r > 0.0 { -du * (x[i] - ctx.xi[i]) / r } else { 0.0 };
            tangents[i].push(t);
        }
    }
    let z = Field::from_values(grid, z)?;
    let edge = z.boundary_max();
    if edge >= BOUNDARY_LEVEL * ctx.a {
        return Err(Error::GridTooSmall(format!(
            "z = {edge:.3e} on the boundary, need below {:.1e}·a",
            BOUNDARY_LEVEL
        )));
    }
    let tangents = tangents
        .into_iter()
        .map(|t| Field::from_values(grid, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ansatz { z, tangents })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyMode {
    /// `f̃_ε` with `V(εx)`, `K(εx)`.
    Full,
    /// `F^{εξ}` with the coefficients frozen at `εξ`.
    Frozen,
}

pub fn energy(u: &Field, mode: EnergyMode, scenario: &Scenario, ctx: &AnsatzContext, disc: &Discretization) -> Result<f64> {
    let disc = disc.moved_to(u.grid)?;
    let prob = match mode {
        EnergyMode::Full => DiscreteProblem::new(scenario, ctx.epsilon, disc)?,
        EnergyMode::Frozen => DiscreteProblem::frozen(disc, scenario.p, ctx.v_xi, ctx.k_xi),
    };
    Ok(prob.energy(&u.values))
}

/// `‖∇f̃_ε(z_ξ)‖` in the discrete `W^{1,2}` Riesz representation.
pub fn residual_norm(ctx: &AnsatzContext, scenario: &Scenario, disc: &Discretization) -> Result<f64> {
    let ans = build(ctx, &scenario.profile, disc.grid)?;
    let prob = DiscreteProblem::new(scenario, ctx.epsilon, disc.clone())?;
    Ok(prob.residual_norm(&ans.z.values))
}
