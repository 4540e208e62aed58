//! Signed coordinate permutations that leave `V` and `K` unchanged.
//!
//! Such maps send the lattice `hℤⁿ` and every window snapped to it onto
//! themselves, so the discrete reduced function inherits them. On a mirror of
//! the group the gradient has no component across the mirror, which is what
//! makes mirror points of a critical curve usable as seeds.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::discretize::MAX_DIM;
use crate::error::Result;
use crate::landscape::Region;
use crate::scenario::Scenario;

/// `(g x)_i = sign_i · x_{perm_i}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedPermutation {
    pub n: usize,
    pub perm: [usize; MAX_DIM],
    pub sign: [f64; MAX_DIM],
}

impl SignedPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            perm: [0, 1, 2],
            sign: [1.0; MAX_DIM],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.sign[i] * x[self.perm[i]]).collect()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.n).all(|i| self.perm[i] == i && self.sign[i] > 0.0)
    }

    /// Unit normal of the fixed hyperplane when `g` is a reflection.
    pub fn mirror_normal(&self) -> Option<Vec<f64>> {
        let moved: Vec<usize> = (0..self.n).filter(|&i| self.perm[i] != i || self.sign[i] < 0.0).collect();
        let mut normal = vec![0.0; self.n];
        match moved[..] {
            [i] => {
                normal[i] = 1.0;
            }
            [i, j] if self.perm[i] == j && self.perm[j] == i && self.sign[i] == self.sign[j] => {
                let r = 0.5f64.sqrt();
                normal[i] = r;
                normal[j] = -self.sign[i] * r;
            }
            _ => return None,
        }
        Some(normal)
    }

    /// All `2ⁿ n!` signed permutations.
    pub fn all(n: usize) -> Vec<Self> {
        let perms: Vec<[usize; MAX_DIM]> = match n {
            1 => vec![[0, 1, 2]],
            2 => vec![[0, 1, 2], [1, 0, 2]],
            _ => vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]],
        };
        let mut out = Vec::new();
        for perm in perms {
            for mask in 0..(1usize << n) {
                let mut sign = [1.0; MAX_DIM];
                for (i, s) in sign.iter_mut().enumerate().take(n) {
                    if mask & (1 << i) != 0 {
                        *s = -1.0;
                    }
                }
                out.push(Self { n, perm, sign });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    pub elements: Vec<SignedPermutation>,
}

impl SymmetryGroup {
    pub fn trivial(n: usize) -> Self {
        Self {
            elements: vec![SignedPermutation::identity(n)],
        }
    }

    /// Elements under which `V` and `K` agree to `1e-12` (relative) on a
    /// scattered sample of `region`.
    pub fn of_scenario(scenario: &Scenario, region: &Region) -> Result<Self> {
        let n = scenario.n;
        let samples = scatter(region, 64);
        let mut elements = Vec::new();
        'outer: for g in SignedPermutation::all(n) {
            for x in &samples {
                let gx = g.apply(x);
                for f in [&scenario.v, &scenario.k] {
                    let (a, b) = (f.eval(x)?, f.eval(&gx)?);
                    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        continue 'outer;
                    }
                }
            }
            elements.push(g);
        }
        Ok(Self { elements })
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.iter().all(|g| g.is_identity())
    }

    pub fn mirrors(&self) -> Vec<(SignedPermutation, Vec<f64>)> {
        self.elements
            .iter()
            .filter_map(|g| g.mirror_normal().map(|v| (*g, v)))
            .collect()
    }

    pub fn same_orbit(&self, a: &[f64], b: &[f64], tol: f64) -> bool {
        self.elements.iter().any(|g| {
            let ga = g.apply(a);
            ga.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() <= tol
        })
    }

    /// Indices of the first point of every orbit.
    pub fn representatives(&self, points: &[Vec<f64>], tol: f64) -> Vec<usize> {
        let mut reps: Vec<usize> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            if !reps.iter().any(|&r| self.same_orbit(&points[r], p, tol)) {
                reps.push(i);
            }
        }
        reps
    }
}

/// Deterministic points of `region` off every mirror, from an additive
/// recurrence with irrational increments.
fn scatter(region: &Region, count: usize) -> Vec<Vec<f64>> {
    let n = region.dim();
    let alpha: [f64; MAX_DIM] = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.414_213_562_373_095_0];
    (1..=count)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let t = (0.5 + j as f64 * alpha[i]).fract();
                    region.lo[i] + t * (region.hi[i] - region.lo[i])
                })
                .collect()
        })
        .collect()
}
