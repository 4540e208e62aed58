//! Linear solves and eigenvalues of a symmetric operator restricted to the
//! complement of a few constraint directions.
//!
//! Constraints are Euclidean vectors `c_i`; a field `v` is admissible when
//! `c_iᵀ v = 0`. For `W^{1,2}` orthogonality to fields `t_i` one takes
//! `c_i = A t_i`. With an SPD preconditioner `M` and `T = M⁻¹C`, the map
//! `P = I - T G⁻¹ Cᵀ`, `G = CᵀT`, is the `M`-orthogonal projector onto the
//! admissible set, and `Pᵀ L P` is symmetric. Solving `Pᵀ L P v = Pᵀ b` by
//! preconditioned MINRES gives the solution of the bordered system
//!
//! ```text
//! [ L  C ] [v]   [b]
//! [ Cᵀ 0 ] [μ] = [0]
//! ```
//!
//! without forming it, and the iterates never leave the admissible set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::discretize::{Discretization, LinearOperator, Preconditioner};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, minres, solve_dense, sym_eigen};

/// A set of linearly independent constraint directions.
#[derive(Debug, Clone)]
pub struct Constraints {
    /// `c_i` (dual side).
    pub c: Vec<Vec<f64>>,
    /// `t_i = M⁻¹ c_i` (primal side).
    pub t: Vec<Vec<f64>>,
    /// `G⁻¹`, row-major.
    ginv: Vec<f64>,
}

impl Constraints {
    pub fn none() -> Self {
        Self {
            c: Vec::new(),
            t: Vec::new(),
            ginv: Vec::new(),
        }
    }

    /// From matched pairs with `M t_i = c_i`.
    pub fn from_pairs(c: Vec<Vec<f64>>, t: Vec<Vec<f64>>) -> Result<Self> {
        let k = c.len();
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                g[i * k + j] = dot(&c[i], &t[j]);
            }
        }
        // symmetrize against rounding
        for i in 0..k {
            for j in 0..i {
                let s = 0.5 * (g[i * k + j] + g[j * k + i]);
                g[i * k + j] = s;
                g[j * k + i] = s;
            }
        }
        let (vals, _) = sym_eigen(&g, k);
        if k > 0 && !(vals[0] > 1e-12 * vals[k - 1]) {
            return Err(Error::SingularSystem {
                sigma_min: vals[0].max(0.0),
                message: format!("constraints are linearly dependent (Gram eigenvalues {:?})", vals),
            });
        }
        let mut ginv = vec![0.0; k * k];
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let col = solve_dense(&g, &e, k).ok_or_else(|| Error::SingularSystem {
                sigma_min: 0.0,
                message: "constraint Gram matrix is singular".into(),
            })?;
            for i in 0..k {
                ginv[i * k + j] = col[i];
            }
        }
        Ok(Self { c, t, ginv })
    }

    /// `W^{1,2}`-orthogonality to the given fields, for use with the Riesz
    /// map of `disc` as preconditioner.
    pub fn w12(disc: &Discretization, fields: &[&[f64]]) -> Result<Self> {
        let t: Vec<Vec<f64>> = fields.iter().map(|f| f.to_vec()).collect();
        let c = t.iter().map(|f| disc.apply_gram(f)).collect();
        Self::from_pairs(c, t)
    }

    /// Euclidean (`L²`) orthogonality to the given vectors.
    pub fn euclidean(vectors: &[&[f64]], precond: &dyn Preconditioner) -> Result<Self> {
        let c: Vec<Vec<f64>> = vectors.iter().map(|v| v.to_vec()).collect();
        let t = c
            .iter()
            .map(|v| {
                let mut x = v.clone();
                precond.solve_in_place(&mut x);
                x
            })
            .collect();
        Self::from_pairs(c, t)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    fn coeffs(&self, basis: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let k = self.len();
        let proj: Vec<f64> = basis.iter().map(|b| dot(b, x)).collect();
        (0..k)
            .map(|i| (0..k).map(|j| self.ginv[i * k + j] * proj[j]).sum())
            .collect()
    }

    /// `x ← P x`.
    pub fn project(&self, x: &mut [f64]) {
        let a = self.coeffs(&self.c, x);
        for (ai, ti) in a.iter().zip(&self.t) {
            axpy(-ai, ti, x);
        }
    }

    /// `y ← Pᵀ y`.
    pub fn project_dual(&self, y: &mut [f64]) {
        let a = self.coeffs(&self.t, y);
        for (ai, ci) in a.iter().zip(&self.c) {
            axpy(-ai, ci, y);
        }
    }

    /// Multipliers `μ = G⁻¹ Tᵀ r` of a dual vector.
    pub fn multipliers(&self, r: &[f64]) -> Vec<f64> {
        self.coeffs(&self.t, r)
    }

    /// Largest `|c_iᵀ v| / (|c_i| |v|)`.
    pub fn violation(&self, v: &[f64]) -> f64 {
        let nv = dot(v, v).sqrt();
        if nv == 0.0 {
            return 0.0;
        }
        self.c
            .iter()
            .map(|c| dot(c, v).abs() / (dot(c, c).sqrt() * nv))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative residual of the projected system in the `M⁻¹` norm.
    pub tol: f64,
    pub max_iter: usize,
    pub refinements: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 2000,
            refinements: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub v: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `|Pᵀ(Lv - b)|_{M⁻¹} / |Pᵀ b|_{M⁻¹}`.
    pub residual: f64,
    pub iterations: usize,
}

fn dual_norm(precond: &dyn Preconditioner, y: &[f64]) -> f64 {
    let mut x = y.to_vec();
    precond.solve_in_place(&mut x);
    dot(&x, y).max(0.0).sqrt()
}

/// Solve `L v - b ∈ span{c_i}`, `c_iᵀ v = 0`.
pub fn solve_constrained(
    op: &dyn LinearOperator,
    precond: &dyn Preconditioner,
    constraints: &Constraints,
    rhs: &[f64],
    opts: SolveOptions,
) -> Result<ConstrainedSolution> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::GridMismatch(format!("rhs has {} entries, operator {n}", rhs.len())));
    }
    let mut b = rhs.to_vec();
    constraints.project_dual(&mut b);
    let bnorm = dual_norm(precond, &b);
    let mut v = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = 0.0;
    // a right side inside the constraint span projects to rounding noise,
    // and the exact answer is v = 0
    if bnorm > 64.0 * f64::EPSILON * dual_norm(precond, rhs) {
        let mut scratch = vec![0.0; n];
        let mut r = b.clone();
        for pass in 0..=opts.refinements {
            let out = minres(
                &r,
                |x, y| {
                    scratch.copy_from_slice(x);
                    constraints.project(&mut scratch);
                    op.apply(&scratch, y);
                    constraints.project_dual(y);
                },
                |x| precond.solve_in_place(x),
                0.1 * opts.tol * bnorm / dual_norm(precond, &r).max(f64::MIN_POSITIVE),
                opts.max_iter,
            );
            iterations += out.iterations;
            let mut dx = out.x;
            constraints.project(&mut dx);
            axpy(1.0, &dx, &mut v);
            // true projected residual
            op.apply(&v, &mut r);
            for (ri, bi) in r.iter_mut().zip(&b) {
                *ri = bi - *ri;
            }
            constraints.project_dual(&mut r);
            residual = dual_norm(precond, &r) / bnorm;
            if residual <= opts.tol {
                break;
            }
            if !out.converged && pass == opts.refinements {
                return Err(Error::SingularSystem {
                    sigma_min: out.sigma_min,
                    message: format!("MINRES stalled at relative residual {residual:.3e} after {iterations} iterations"),
                });
            }
        }
        if residual > opts.tol {
            return Err(Error::SingularSystem {
                sigma_min: f64::NAN,
                message: format!("relative residual {residual:.3e} above {:.1e}", opts.tol),
            });
        }
    }
    let mut lv = vec![0.0; n];
    op.apply(&v, &mut lv);
    for (l, b) in lv.iter_mut().zip(rhs) {
        *l = b - *l;
    }
    let multipliers = constraints.multipliers(&lv);
    Ok(ConstrainedSolution {
        v,
        multipliers,
        residual,
        iterations,
    })
}

/// Which part of the spectrum to resolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// The `k` algebraically smallest eigenvalues.
    Smallest(usize),
    /// The eigenvalue closest to zero.
    NearestZero,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Residual bound relative to the largest Ritz value.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_steps: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzValues {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub steps: usize,
}

/// Deterministic, structure-free start vector.
fn start_vector(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let s = ((j as f64) * 12.9898 + 78.233).sin() * 43758.5453;
            s - s.floor() - 0.5
        })
        .collect()
}

/// Eigenvalues of `L v = λ M v` on the admissible set, by Lanczos in the
/// `M` inner product with full reorthogonalization.
pub fn lanczos(
    op: &dyn LinearOperator,
    mass: &dyn Preconditioner,
    constraints: &Constraints,
    target: Target,
    opts: EigenOptions,
) -> Result<RitzValues> {
    let n = op.dim();
    let max_steps = opts.max_steps.min(n.saturating_sub(constraints.len())).max(1);
    // q_j and y_j = M q_j
    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut y = start_vector(n);
    constraints.project_dual(&mut y);
    let mut q = y.clone();
    mass.solve_in_place(&mut q);
    let nrm = dot(&q, &y).sqrt();
    if !(nrm > 0.0) {
        return Err(Error::Eigensolver { iterations: 0 });
    }
    q.iter_mut().for_each(|x| *x /= nrm);
    y.iter_mut().for_each(|x| *x /= nrm);

    let mut scratch = vec![0.0; n];
    let mut next_check = 10usize;
    let mut last: Option<RitzValues> = None;
    for step in 0..max_steps {
        scratch.copy_from_slice(&q);
        constraints.project(&mut scratch);
        let mut u = vec![0.0; n];
        op.apply(&scratch, &mut u);
        constraints.project_dual(&mut u);
        let mut w = u.clone();
        mass.solve_in_place(&mut w);
        qs.push(q);
        ys.push(y);
        let mut alpha = 0.0;
        for _pass in 0..2 {
            for (i, (qi, yi)) in qs.iter().zip(&ys).enumerate() {
                let c = dot(&w, yi);
                if i == step {
                    alpha += c;
                }
                axpy(-c, qi, &mut w);
                axpy(-c, yi, &mut u);
            }
        }
        // rounding reintroduces the constraint directions, which are null
        // vectors of the projected pencil
        constraints.project(&mut w);
        // carrying `M q` through the recurrence lets `y − M q` grow
        // geometrically, so it is recomputed
        mass.apply(&w, &mut u);
        alphas.push(alpha);
        let beta = dot(&w, &u).max(0.0).sqrt();
        let scale = alphas.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        let exhausted = beta <= 1e-12 * scale || step + 1 == max_steps;
        if step + 1 >= next_check || exhausted {
            let ritz = ritz_values(&alphas, &betas, if exhausted { 0.0 } else { beta });
            let picked = pick(&ritz, target, opts.tol * scale);
            if let Some(found) = picked {
                return Ok(RitzValues { steps: step + 1, ..found });
            }
            last = Some(RitzValues {
                values: ritz.iter().map(|r| r.0).collect(),
                residuals: ritz.iter().map(|r| r.1).collect(),
                steps: step + 1,
            });
            next_check = step + 1 + (step / 8).max(5);
        }
        if exhausted {
            break;
        }
        betas.push(beta);
        q = w;
        y = u;
        q.iter_mut().for_each(|x| *x /= beta);
        y.iter_mut().for_each(|x| *x /= beta);
    }
    let steps = last.map(|l| l.steps).unwrap_or(0);
    Err(Error::Eigensolver { iterations: steps })
}

/// Ritz values with residual bounds `β |s_last|`, ascending.
fn ritz_values(alphas: &[f64], betas: &[f64], beta_next: f64) -> Vec<(f64, f64)> {
    let k = alphas.len();
    let mut t = vec![0.0; k * k];
    for i in 0..k {
        t[i * k + i] = alphas[i];
        if i + 1 < k {
            t[i * k + i + 1] = betas[i];
            t[(i + 1) * k + i] = betas[i];
        }
    }
    let (vals, vecs) = sym_eigen(&t, k);
    (0..k).map(|j| (vals[j], beta_next * vecs[(k - 1) * k + j].abs())).collect()
}

fn pick(ritz: &[(f64, f64)], target: Target, tol: f64) -> Option<RitzValues> {
    match target {
        Target::Smallest(count) => {
            if ritz.len() < count || ritz[..count].iter().any(|r| r.1 > tol) {
                return None;
            }
            Some(RitzValues {
                values: ritz[..count].iter().map(|r| r.0).collect(),
                residuals: ritz[..count].iter().map(|r| r.1).collect(),
                steps: 0,
            })
        }
        Target::NearestZero => {
            let best = ritz
                .iter()
                .filter(|r| r.1 <= tol)
                .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))?;
            // an unconverged Ritz value closer to zero may still hide a smaller eigenvalue
            if ritz.iter().any(|r| r.1 > tol && r.0.abs() < best.0.abs()) {
                return None;
            }
            Some(RitzValues {
                values: vec![best.0],
                residuals: vec![best.1],
                steps: 0,
            })
        }
    }
}
