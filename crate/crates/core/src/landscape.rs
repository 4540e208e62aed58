//! The auxiliary function `A(x) = (1 + V(x))^θ K(x)^{−2/(p−1)}`, its critical
//! points, isolating blocks around critical manifolds, a confined descent
//! flow on the reduced function, and multiplicity lower bounds.
//!
//! Two coordinate systems appear. `A` lives in physical space `x`, the reduced
//! function `Φ_ε` in the stretched variable `ξ = x/ε`. Blocks are built in `x`
//! from the Hessian of `A` and rescaled when `Φ_ε` is probed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::expr::ScalarFieldExpr;
use crate::linalg::{dot, sym_eigen};
use crate::reduction::Reducer;
use crate::scenario::Scenario;
use crate::symmetry::{SignedPermutation, SymmetryGroup};

/// Relative size below which a Hessian eigenvalue counts as zero.
pub const DEGENERACY: f64 = 1e-6;
/// Smallest admissible normal component of the flow on a block face,
/// relative to the flow speed.
pub const FACE_MARGIN: f64 = 0.1;
/// A descent trajectory ends once the gradient is within this factor of the
/// critical tolerance.
pub const POLISH_HANDOFF: f64 = 1e3;

/// A smooth function with a Newton model, explored by the searches below.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Symmetric model Hessian, row-major.
    fn hessian(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Gradient norm below which `x` counts as critical.
    fn critical_tol(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryFunction {
    pub v: ScalarFieldExpr,
    pub k: ScalarFieldExpr,
    pub n: usize,
    pub p: f64,
    pub theta: f64,
}

/// `A`, `∇A` and `∇²A` (row-major) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl AuxiliaryFunction {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            v: scenario.v.clone(),
            k: scenario.k.clone(),
            n: scenario.n,
            p: scenario.p,
            theta: scenario.theta(),
        }
    }

    fn kappa(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    fn base(&self, v: f64, k: f64) -> Result<f64> {
        if !(1.0 + v > 0.0) || !(k > 0.0) {
            return Err(Error::Domain(format!("A undefined where 1 + V = {} and K = {k}", 1.0 + v)));
        }
        Ok((1.0 + v).powf(self.theta) * k.powf(-self.kappa()))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.base(self.v.eval(x)?, self.k.eval(x)?)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(x)?.gradient)
    }

    /// Chain rule on `log A = θ log(1 + V) − κ log K`.
    pub fn eval(&self, x: &[f64]) -> Result<AuxValue> {
        let n = self.n;
        let dv = self.v.eval_with_derivatives(x)?;
        let dk = self.k.eval_with_derivatives(x)?;
        let value = self.base(dv.value, dk.value)?;
        let (s, k) = (1.0 + dv.value, dk.value);
        let (th, ka) = (self.theta, self.kappa());
        let glog: Vec<f64> = (0..n)
            .map(|i| th * dv.gradient[i] / s - ka * dk.gradient[i] / k)
            .collect();
        let mut hessian = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let hv = dv.hessian[i * n + j] / s - dv.gradient[i] * dv.gradient[j] / (s * s);
                let hk = dk.hessian[i * n + j] / k - dk.gradient[i] * dk.gradient[j] / (k * k);
                hessian[i * n + j] = value * (th * hv - ka * hk + glog[i] * glog[j]);
            }
        }
        Ok(AuxValue {
            value,
            gradient: glog.iter().map(|g| value * g).collect(),
            hessian,
        })
    }
}

impl Landscape for AuxiliaryFunction {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        AuxiliaryFunction::value(self, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        AuxiliaryFunction::gradient(self, x)
    }

    fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(x)?.hessian)
    }

    fn critical_tol(&self, _x: &[f64]) -> f64 {
        1e-8
    }
}

/// `Φ_ε` in the variable ξ, with `C₁ε²∇²A(εξ)` as Newton model.
pub struct ReducedLandscape<'r, 'a> {
    pub reducer: &'r Reducer<'a>,
    pub aux: AuxiliaryFunction,
}

impl<'r, 'a> ReducedLandscape<'r, 'a> {
    pub fn new(reducer: &'r Reducer<'a>) -> Self {
        Self {
            aux: AuxiliaryFunction::new(reducer.scenario),
            reducer,
        }
    }

    fn physical(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter().map(|v| v * self.reducer.epsilon).collect()
    }
}

impl Landscape for ReducedLandscape<'_, '_> {
    fn dim(&self) -> usize {
        self.reducer.n()
    }

    fn value(&self, xi: &[f64]) -> Result<f64> {
        self.reducer.phi(xi)
    }

    fn gradient(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.reducer.phi_and_gradient(xi)?.1)
    }

    fn hessian(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let eps = self.reducer.epsilon;
        let scale = self.reducer.scenario.constants.c1 * eps * eps;
        Ok(self.aux.eval(&self.physical(xi))?.hessian.iter().map(|h| scale * h).collect())
    }

    /// Five times the rounding floor of the central difference.
    fn critical_tol(&self, xi: &[f64]) -> f64 {
        let scale = self.aux.value(&self.physical(xi)).unwrap_or(1.0) * self.reducer.scenario.constants.c1;
        5.0 * 1e-13 * scale.abs().max(1.0) / self.reducer.fd_step()
    }
}

/// An axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Invalid(format!("invalid region {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// `[−r, r]ⁿ`.
    pub fn cube(n: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; n], vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Longest side.
    pub fn size(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= a - slack && *v <= b + slack)
    }

    /// Cell centres of a lattice with about `count` points.
    pub fn lattice(&self, count: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m: usize = 1;
        while m.pow(n as u32) < count.max(1) {
            m += 1;
        }
        let total = m.pow(n as u32);
        (0..total)
            .map(|idx| {
                let mut rem = idx;
                let mut x = vec![0.0; n];
                for i in (0..n).rev() {
                    let j = rem % m;
                    rem /= m;
                    x[i] = self.lo[i] + (j as f64 + 0.5) * (self.hi[i] - self.lo[i]) / m as f64;
                }
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Min,
    Max,
    /// Saddle with the given number of negative Hessian eigenvalues.
    Saddle(usize),
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub hessian_eigs: Vec<f64>,
    pub kind: CriticalKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSearch {
    pub points: Vec<CriticalPoint>,
    /// The Hessian vanished identically somewhere: every point is critical.
    pub degenerate_landscape: bool,
    pub seeds: usize,
}

/// Classification from sorted eigenvalues.
pub fn classify(eigs: &[f64]) -> CriticalKind {
    let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-12 || eigs.iter().any(|v| v.abs() < DEGENERACY * scale) {
        return CriticalKind::Degenerate;
    }
    let neg = eigs.iter().filter(|v| **v < 0.0).count();
    match neg {
        0 => CriticalKind::Min,
        k if k == eigs.len() => CriticalKind::Max,
        k => CriticalKind::Saddle(k),
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Newton step from the pseudo-inverse of the model Hessian.
fn newton_step(h: &[f64], g: &[f64], n: usize) -> Option<Vec<f64>> {
    let (vals, vecs) = sym_eigen(h, n);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-300 {
        return None;
    }
    let mut step = vec![0.0; n];
    for j in 0..n {
        if vals[j].abs() < DEGENERACY * scale {
            continue;
        }
        let col: Vec<f64> = (0..n).map(|i| vecs[i * n + j]).collect();
        let c = dot(&col, g) / vals[j];
        for i in 0..n {
            step[i] -= c * col[i];
        }
    }
    Some(step)
}

/// Outcome of a Newton polish.
struct Polished {
    x: Vec<f64>,
    grad_norm: f64,
}

/// Damped Newton on `∇f = 0`, staying within `max_step` per iteration and
/// stopping when `inside` fails.
fn polish(
    f: &dyn Landscape,
    x0: &[f64],
    max_iter: usize,
    max_step: f64,
    inside: &dyn Fn(&[f64]) -> bool,
) -> Result<Option<Polished>> {
    let n = f.dim();
    let mut x = x0.to_vec();
    let mut g = f.gradient(&x)?;
    let mut gn = norm(&g);
    for _ in 0..max_iter {
        if gn < f.critical_tol(&x) {
            return Ok(Some(Polished { x, grad_norm: gn }));
        }
        let h = f.hessian(&x)?;
        let Some(mut step) = newton_step(&h, &g, n) else {
            return Ok(None);
        };
        let len = norm(&step);
        if len > max_step {
            for s in step.iter_mut() {
                *s *= max_step / len;
            }
        }
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if inside(&trial) {
                let gt = f.gradient(&trial)?;
                let gtn = norm(&gt);
                if gtn < gn {
                    x = trial;
                    g = gt;
                    gn = gtn;
                    accepted = true;
                    break;
                }
            }
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((gn < f.critical_tol(&x)).then_some(Polished { x, grad_norm: gn }))
}

fn critical_point(f: &dyn Landscape, x: Vec<f64>, grad_norm: f64) -> Result<CriticalPoint> {
    let n = f.dim();
    let h = f.hessian(&x)?;
    let (hessian_eigs, _) = sym_eigen(&h, n);
    Ok(CriticalPoint {
        value: f.value(&x)?,
        kind: classify(&hessian_eigs),
        hessian_eigs,
        grad_norm,
        x,
    })
}

/// Keep the first of any points closer than `radius`.
fn dedup(points: Vec<CriticalPoint>, radius: f64) -> Vec<CriticalPoint> {
    let mut out: Vec<CriticalPoint> = Vec::new();
    for p in points {
        let close = out.iter().any(|q| {
            let d: f64 = q.x.iter().zip(&p.x).map(|(a, b)| (a - b) * (a - b)).sum();
            d.sqrt() < radius
        });
        if !close {
            out.push(p);
        }
    }
    out
}

/// Multistart Newton search from `budget` lattice seeds.
pub fn find_critical_points(f: &dyn Landscape, region: &Region, budget: usize) -> Result<CriticalSearch> {
    if region.dim() != f.dim() {
        return Err(Error::Invalid(format!("region in ℝ^{}, function on ℝ^{}", region.dim(), f.dim())));
    }
    let seeds = region.lattice(budget);
    let size = region.size();
    let inside = |x: &[f64]| region.contains(x, 1e-9 * size);
    let mut found = Vec::new();
    let mut degenerate_landscape = false;
    for s in &seeds {
        if let Some(p) = polish(f, s, 100, 0.25 * size, &inside)? {
            let cp = critical_point(f, p.x, p.grad_norm)?;
            if cp.hessian_eigs.iter().all(|v| v.abs() <= 1e-12) {
                degenerate_landscape = true;
            }
            found.push(cp);
        }
    }
    Ok(CriticalSearch {
        points: dedup(found, 1e-3 * size),
        degenerate_landscape,
        seeds: seeds.len(),
    })
}

/// Local frame of a block at one point of the critical set.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSeed {
    pub x: Vec<f64>,
    pub tangent: Vec<Vec<f64>>,
    /// Negative-curvature normals (the flow of `−∇f` leaves along these).
    pub unstable: Vec<Vec<f64>>,
    pub stable: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Exit,
    Entrance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCheck {
    /// Physical coordinates.
    pub x: Vec<f64>,
    pub kind: FaceKind,
    /// Outward (exit) or inward (entrance) flow component over flow speed.
    pub margin: f64,
    /// Checked on `A` (false) or on `Φ_ε` (true).
    pub reduced: bool,
}

/// `B = M × D₁ × D₂` in physical space; `B^ε = B/ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolatingBlock {
    pub epsilon: f64,
    pub seeds: Vec<BlockSeed>,
    pub k1: usize,
    pub k2: usize,
    pub r1: f64,
    pub r2: f64,
    pub faces: Vec<FaceCheck>,
    pub min_margin: f64,
}

/// Where a physical point sits relative to a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCoords {
    pub seed: usize,
    /// Unstable radius over `r1`.
    pub u: f64,
    /// Stable radius over `r2`.
    pub s: f64,
}

impl IsolatingBlock {
    pub fn coords(&self, x: &[f64]) -> BlockCoords {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.seeds.iter().enumerate() {
            let d: f64 = s.x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        let seed = &self.seeds[best.0];
        let d: Vec<f64> = x.iter().zip(&seed.x).map(|(a, b)| a - b).collect();
        let radial = |frame: &[Vec<f64>]| frame.iter().map(|e| dot(e, &d).powi(2)).sum::<f64>().sqrt();
        BlockCoords {
            seed: best.0,
            u: if self.k1 > 0 { radial(&seed.unstable) / self.r1 } else { 0.0 },
            s: if self.k2 > 0 { radial(&seed.stable) / self.r2 } else { 0.0 },
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let c = self.coords(x);
        c.u <= 1.0 && c.s <= 1.0
    }

    pub fn is_degenerate(&self) -> bool {
        self.k1 + self.k2 == 0
    }
}

/// Unit directions sampling the sphere of a frame.
fn sphere_samples(frame: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = frame.len();
    let dim = frame.first().map_or(0, |e| e.len());
    let combo = |coef: &[(usize, f64)]| -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for &(i, c) in coef {
            for (a, b) in v.iter_mut().zip(&frame[i]) {
                *a += c * b;
            }
        }
        let n = norm(&v);
        v.iter().map(|a| a / n).collect()
    };
    let mut out = Vec::new();
    match k {
        0 => {}
        1 => {
            out.push(combo(&[(0, 1.0)]));
            out.push(combo(&[(0, -1.0)]));
        }
        2 => {
            for j in 0..8 {
                let t = core::f64::consts::PI * j as f64 / 4.0;
                out.push(combo(&[(0, t.cos()), (1, t.sin())]));
            }
        }
        _ => {
            for i in 0..k {
                out.push(combo(&[(i, 1.0)]));
                out.push(combo(&[(i, -1.0)]));
                for j in i + 1..k {
                    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        out.push(combo(&[(i, a), (j, b)]));
                    }
                }
            }
        }
    }
    out
}

fn frame_at(aux: &dyn Landscape, x: &[f64]) -> Result<BlockSeed> {
    let n = aux.dim();
    let h = aux.hessian(x)?;
    let (vals, vecs) = sym_eigen(&h, n);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut seed = BlockSeed {
        x: x.to_vec(),
        tangent: Vec::new(),
        unstable: Vec::new(),
        stable: Vec::new(),
    };
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| vecs[i * n + j]).collect();
        if scale <= 1e-12 || vals[j].abs() < DEGENERACY * scale {
            seed.tangent.push(col);
        } else if vals[j] < 0.0 {
            seed.unstable.push(col);
        } else {
            seed.stable.push(col);
        }
    }
    Ok(seed)
}

/// Face sample points and their outward normals.
fn face_points(seeds: &[BlockSeed], r1: f64, r2: f64) -> Vec<(Vec<f64>, Vec<f64>, FaceKind)> {
    let mut out = Vec::new();
    for s in seeds {
        let us = sphere_samples(&s.unstable);
        let ss = sphere_samples(&s.stable);
        // exit faces, also at half-way stable offsets
        for u in &us {
            let mut offsets = vec![vec![0.0; s.x.len()]];
            for v in &ss {
                offsets.push(v.iter().map(|a| 0.5 * r2 * a).collect());
            }
            for off in &offsets {
                let x = s.x.iter().zip(u).zip(off).map(|((a, b), c)| a + r1 * b + c).collect();
                out.push((x, u.clone(), FaceKind::Exit));
            }
        }
        for v in &ss {
            let mut offsets = vec![vec![0.0; s.x.len()]];
            for u in &us {
                offsets.push(u.iter().map(|a| 0.5 * r1 * a).collect());
            }
            for off in &offsets {
                let x = s.x.iter().zip(v).zip(off).map(|((a, b), c)| a + r2 * b + c).collect();
                out.push((x, v.clone(), FaceKind::Entrance));
            }
        }
    }
    out
}

fn face_margin(grad: &[f64], normal: &[f64], kind: FaceKind) -> f64 {
    let gn = norm(grad);
    if gn == 0.0 {
        return 0.0;
    }
    let c = dot(grad, normal) / gn;
    match kind {
        FaceKind::Exit => -c,
        FaceKind::Entrance => c,
    }
}

fn check_faces(
    aux: &dyn Landscape,
    reduced: Option<&dyn Landscape>,
    epsilon: f64,
    seeds: &[BlockSeed],
    r1: f64,
    r2: f64,
) -> Result<Vec<FaceCheck>> {
    let mut checks = Vec::new();
    for (x, normal, kind) in face_points(seeds, r1, r2) {
        let g = aux.gradient(&x)?;
        checks.push(FaceCheck {
            margin: face_margin(&g, &normal, kind),
            x: x.clone(),
            kind,
            reduced: false,
        });
        if let Some(phi) = reduced {
            let xi: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
            let g = phi.gradient(&xi)?;
            checks.push(FaceCheck {
                margin: face_margin(&g, &normal, kind),
                x,
                kind,
                reduced: true,
            });
        }
    }
    Ok(checks)
}

/// Frames from the Hessian of `aux` at each sample of `M`, then radii
/// `r0, r0/2, …` until every face sample passes on `aux` and, when given,
/// on the reduced function at `ξ = x/ε`.
pub fn build_block(
    samples: &[Vec<f64>],
    aux: &dyn Landscape,
    reduced: Option<&dyn Landscape>,
    epsilon: f64,
    r0: f64,
) -> Result<IsolatingBlock> {
    if samples.is_empty() {
        return Err(Error::Invalid("a block needs at least one sample of M".into()));
    }
    let seeds = samples.iter().map(|x| frame_at(aux, x)).collect::<Result<Vec<_>>>()?;
    let (k1, k2) = (seeds[0].unstable.len(), seeds[0].stable.len());
    if seeds.iter().any(|s| s.unstable.len() != k1 || s.stable.len() != k2) {
        return Err(Error::Transversality {
            face: "frames".into(),
            margin: 0.0,
        });
    }
    let mut worst: Option<FaceCheck> = None;
    for j in 0..7 {
        let r = r0 / f64::powi(2.0, j);
        let faces = check_faces(aux, reduced, epsilon, &seeds, r, r)?;
        let min = faces.iter().map(|f| f.margin).fold(f64::INFINITY, f64::min);
        if min >= FACE_MARGIN {
            return Ok(IsolatingBlock {
                epsilon,
                seeds,
                k1,
                k2,
                r1: r,
                r2: r,
                min_margin: if faces.is_empty() { 0.0 } else { min },
                faces,
            });
        }
        worst = faces.into_iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
    }
    let w = worst.expect("face samples exist when the block is not degenerate");
    Err(Error::Transversality {
        face: format!(
            "{} face at x = {:?}{}",
            if w.kind == FaceKind::Exit { "exit" } else { "entrance" },
            w.x,
            if w.reduced { " (reduced function)" } else { "" }
        ),
        margin: w.margin,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub max_steps: usize,
    pub newton_iters: usize,
    /// Offsets of interior seeds along each normal, as fractions of the radius.
    pub interior_fraction: f64,
    /// Whether to integrate the descent flow (otherwise Newton only).
    pub descend: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            max_steps: 200,
            newton_iters: 40,
            interior_fraction: 0.5,
            descend: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryEnd {
    Critical,
    Exit,
    Escape,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Physical start point.
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub outcome: TrajectoryEnd,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    /// Critical points of `Φ_ε`, in ξ.
    pub critical_points: Vec<CriticalPoint>,
    pub lower_bound: usize,
    pub trajectories: Vec<Trajectory>,
    pub escapes: usize,
    pub degenerate: bool,
    pub pass: bool,
}

fn seed_mesh(block: &IsolatingBlock, frac: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut interior = Vec::new();
    let mut faces = Vec::new();
    for s in &block.seeds {
        interior.push(s.x.clone());
        for (frame, r) in [(&s.unstable, block.r1), (&s.stable, block.r2)] {
            for e in frame {
                for sign in [1.0, -1.0] {
                    interior.push(s.x.iter().zip(e).map(|(a, b)| a + sign * frac * r * b).collect());
                    // just inside the face
                    faces.push(s.x.iter().zip(e).map(|(a, b)| a + sign * 0.98 * r * b).collect());
                }
            }
        }
    }
    (interior, faces)
}

/// Armijo descent on `f` in ξ from a physical start point, confined to `B^ε`.
fn descend(f: &dyn Landscape, block: &IsolatingBlock, start: &[f64], max_steps: usize) -> Result<Trajectory> {
    let eps = block.epsilon;
    let n = f.dim();
    let mut xi: Vec<f64> = start.iter().map(|v| v / eps).collect();
    let r = match (block.k1, block.k2) {
        (0, _) => block.r2,
        (_, 0) => block.r1,
        _ => block.r1.min(block.r2),
    };
    let cap = 0.1 * r / eps;
    let mut value = f.value(&xi)?;
    let mut outcome = TrajectoryEnd::Stalled;
    let mut steps = 0;
    let phys = |xi: &[f64]| -> Vec<f64> { xi.iter().map(|v| v * eps).collect() };
    while steps < max_steps {
        let g = f.gradient(&xi)?;
        let gn = norm(&g);
        // close enough for the Newton polish, which is much cheaper than
        // descending through the noise floor of the gradient
        if gn < POLISH_HANDOFF * f.critical_tol(&xi) {
            outcome = TrajectoryEnd::Critical;
            break;
        }
        let (vals, _) = sym_eigen(&f.hessian(&xi)?, n);
        let curv = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut tau = if curv > 0.0 { 1.0 / curv } else { cap / gn };
        tau = tau.min(cap / gn);
        let mut moved = false;
        for _ in 0..12 {
            let trial: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - tau * b).collect();
            let c = block.coords(&phys(&trial));
            if c.s > 1.0 {
                xi = trial;
                outcome = TrajectoryEnd::Escape;
                moved = true;
                break;
            }
            if c.u > 1.0 {
                xi = trial;
                outcome = TrajectoryEnd::Exit;
                moved = true;
                break;
            }
            let ft = f.value(&trial)?;
            if ft <= value - 1e-4 * tau * gn * gn {
                xi = trial;
                value = ft;
                moved = true;
                break;
            }
            tau *= 0.5;
        }
        steps += 1;
        if !moved || outcome != TrajectoryEnd::Stalled {
            break;
        }
    }
    Ok(Trajectory {
        start: start.to_vec(),
        end: phys(&xi),
        outcome,
        steps,
    })
}

/// Critical points of the reduced function `f` (in ξ) inside `B^ε`.
pub fn flow_count(block: &IsolatingBlock, f: &dyn Landscape, lower_bound: usize, opts: FlowOptions) -> Result<FlowReport> {
    if block.is_degenerate() {
        return Ok(FlowReport {
            critical_points: Vec::new(),
            lower_bound,
            trajectories: Vec::new(),
            escapes: 0,
            degenerate: true,
            pass: false,
        });
    }
    let eps = block.epsilon;
    let (interior, faces) = seed_mesh(block, opts.interior_fraction);
    let mut trajectories = Vec::new();
    let mut candidates: Vec<Vec<f64>> = interior.iter().map(|x| x.iter().map(|v| v / eps).collect()).collect();
    if opts.descend {
        for start in interior.iter().chain(&faces) {
            let t = descend(f, block, start, opts.max_steps)?;
            if t.outcome == TrajectoryEnd::Critical {
                candidates.push(t.end.iter().map(|v| v / eps).collect());
            }
            trajectories.push(t);
        }
    }
    let inside = |xi: &[f64]| {
        let x: Vec<f64> = xi.iter().map(|v| v * eps).collect();
        block.contains(&x)
    };
    let max_step = 0.25 * block.r1.max(block.r2) / eps;
    let mut found = Vec::new();
    for c in &candidates {
        if let Some(p) = polish(f, c, opts.newton_iters, max_step, &inside)? {
            found.push(critical_point(f, p.x, p.grad_norm)?);
        }
    }
    let critical_points = dedup(found, 1e-3 * block.r1.max(block.r2) / eps);
    let escapes = trajectories.iter().filter(|t| t.outcome == TrajectoryEnd::Escape).count();
    Ok(FlowReport {
        pass: critical_points.len() >= lower_bound && escapes == 0,
        critical_points,
        lower_bound,
        trajectories,
        escapes,
        degenerate: false,
    })
}

/// Samples of a one-dimensional piece of a degenerate critical set of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalCurve {
    pub points: Vec<Vec<f64>>,
    /// The trace returned to its start: the piece is a closed loop.
    pub closed: bool,
}

impl CriticalCurve {
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| norm(&p.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Consecutive sample pairs, closing the loop when there is one.
    fn segments(&self) -> Vec<(&[f64], &[f64])> {
        let m = self.points.len();
        let count = if self.closed { m } else { m.saturating_sub(1) };
        (0..count)
            .map(|i| (self.points[i].as_slice(), self.points[(i + 1) % m].as_slice()))
            .collect()
    }
}

/// Newton back onto the critical set, moving only across the degenerate
/// directions; `mirror` keeps the iterate on a fixed hyperplane.
fn project_to_critical(f: &dyn Landscape, x0: &[f64], mirror: Option<&SignedPermutation>) -> Result<Option<Vec<f64>>> {
    let n = f.dim();
    let mut x = x0.to_vec();
    let symmetrize = |x: &mut Vec<f64>| {
        if let Some(g) = mirror {
            let gx = g.apply(x);
            for (a, b) in x.iter_mut().zip(&gx) {
                *a = 0.5 * (*a + b);
            }
        }
    };
    symmetrize(&mut x);
    for _ in 0..30 {
        let g = f.gradient(&x)?;
        if norm(&g) < f.critical_tol(&x) {
            return Ok(Some(x));
        }
        let Some(step) = newton_step(&f.hessian(&x)?, &g, n) else {
            return Ok(None);
        };
        for (a, b) in x.iter_mut().zip(&step) {
            *a += b;
        }
        symmetrize(&mut x);
    }
    Ok(None)
}

fn tangent_at(f: &dyn Landscape, x: &[f64]) -> Result<Vec<f64>> {
    let frame = frame_at(f, x)?;
    match frame.tangent.len() {
        1 => Ok(frame.tangent[0].clone()),
        d => Err(Error::Topology(format!(
            "critical set of dimension {d} at {x:?}; only curves are traced"
        ))),
    }
}

/// Follows a one-dimensional critical set of `f` from `start` with
/// predictor steps of length `step` along the tangent, in both directions
/// until the trace closes or leaves `region`.
pub fn trace_critical_curve(f: &dyn Landscape, start: &[f64], region: &Region, step: f64) -> Result<CriticalCurve> {
    let max_steps = (40.0 * region.size() / step).ceil() as usize + 10;
    let t0 = tangent_at(f, start)?;
    let mut branches: Vec<Vec<Vec<f64>>> = Vec::new();
    for sign in [1.0, -1.0] {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let mut x = start.to_vec();
        let mut t: Vec<f64> = t0.iter().map(|v| sign * v).collect();
        let mut closed = false;
        for k in 0..max_steps {
            let pred: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + step * b).collect();
            let Some(next) = project_to_critical(f, &pred, None)? else {
                return Err(Error::Invalid(format!("lost the critical curve near {pred:?}")));
            };
            if !region.contains(&next, 0.0) {
                break;
            }
            let back: f64 = norm(&next.iter().zip(start).map(|(a, b)| a - b).collect::<Vec<_>>());
            if k >= 2 && back < 0.75 * step {
                closed = true;
                break;
            }
            let mut tn = tangent_at(f, &next)?;
            if dot(&tn, &t) < 0.0 {
                tn.iter_mut().for_each(|v| *v = -*v);
            }
            t = tn;
            x = next.clone();
            pts.push(next);
            if k + 1 == max_steps {
                return Err(Error::Invalid(format!("critical curve from {start:?} did not close in {max_steps} steps")));
            }
        }
        if closed {
            let mut points = vec![start.to_vec()];
            points.extend(pts);
            return Ok(CriticalCurve { points, closed: true });
        }
        branches.push(pts);
    }
    let mut points: Vec<Vec<f64>> = branches[1].iter().rev().cloned().collect();
    points.push(start.to_vec());
    points.extend(branches[0].iter().cloned());
    Ok(CriticalCurve { points, closed: false })
}

/// Points where the curve crosses a mirror of `group`, projected back onto
/// the critical set within the mirror.
pub fn mirror_points(f: &dyn Landscape, curve: &CriticalCurve, group: &SymmetryGroup) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let scale = curve
        .points
        .iter()
        .map(|p| norm(p))
        .fold(0.0f64, f64::max)
        .max(1.0);
    for (g, normal) in group.mirrors() {
        for (a, b) in curve.segments() {
            let (sa, sb) = (dot(&normal, a), dot(&normal, b));
            let guess: Vec<f64> = if sa == 0.0 {
                a.to_vec()
            } else if sa * sb < 0.0 {
                let t = sa / (sa - sb);
                a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
            } else {
                continue;
            };
            if let Some(x) = project_to_critical(f, &guess, Some(&g))? {
                let fresh = out
                    .iter()
                    .all(|q| norm(&q.iter().zip(&x).map(|(u, v)| u - v).collect::<Vec<_>>()) > 1e-6 * scale);
                if fresh {
                    out.push(x);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Point,
    Circle,
    Sphere(usize),
    Torus(usize),
    Product(Vec<Topology>),
}

impl Topology {
    /// Parses `point`, `circle`, `sphere(d)`, `torus(d)` and `a x b` products.
    pub fn parse(tag: &str) -> Result<Self> {
        let tag = tag.trim();
        if tag.contains(" x ") {
            let parts = tag.split(" x ").map(Self::parse).collect::<Result<Vec<_>>>()?;
            return Ok(Topology::Product(parts));
        }
        let arg = |prefix: &str| -> Option<usize> {
            tag.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?.trim().parse().ok()
        };
        match tag {
            "point" => Ok(Topology::Point),
            "circle" => Ok(Topology::Circle),
            _ => {
                if let Some(d) = arg("sphere") {
                    if d >= 1 {
                        return Ok(Topology::Sphere(d));
                    }
                }
                if let Some(d) = arg("torus") {
                    if d >= 1 {
                        return Ok(Topology::Torus(d));
                    }
                }
                Err(Error::Topology(String::from(tag)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplicityMode {
    CupLength,
    Category,
}

/// Lower bound on the number of critical points near a manifold of the given
/// topology. Both modes agree on the supported spaces; products add the
/// cup lengths of their factors.
pub fn predict_multiplicity(topology: &Topology, mode: MultiplicityMode) -> Result<usize> {
    let _ = mode;
    Ok(match topology {
        Topology::Point => 1,
        Topology::Circle => 2,
        Topology::Sphere(_) => 2,
        Topology::Torus(d) => d + 1,
        Topology::Product(parts) => {
            if parts.is_empty() {
                return Err(Error::Topology("empty product".into()));
            }
            let mut total = 1;
            for p in parts {
                if matches!(p, Topology::Product(_)) {
                    return Err(Error::Topology("nested products".into()));
                }
                total += predict_multiplicity(p, mode)? - 1;
            }
            total
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub epsilon: f64,
    pub delta: f64,
    /// `sup_X A`.
    pub a: f64,
    /// `inf_{∂X_δ} A`.
    pub b: f64,
    /// `C₁(a + b)/2`.
    pub level: f64,
    /// `level − max_{X^ε} Φ̃_ε`; positive when `X^ε ⊂ Y^ε`.
    pub inner_margin: f64,
    /// `min_{∂X_δ^ε} Φ̃_ε − level`; positive when `Y^ε` avoids the boundary.
    pub boundary_margin: f64,
    pub mesh_points: usize,
    pub y_points: usize,
    pub inner_holds: bool,
    pub avoids_boundary: bool,
}

/// Evaluates the sandwich `X^ε ⊂ Y^ε ⊂ X_δ^ε` on a mesh of `X_δ`. For maxima
/// (`maximum = true`) all signs are flipped.
pub fn sublevel_sandwich(
    x_set: &[Vec<f64>],
    delta: f64,
    reducer: &Reducer,
    maximum: bool,
    mesh_per_axis: usize,
) -> Result<SandwichReport> {
    let scenario = reducer.scenario;
    let aux = AuxiliaryFunction::new(scenario);
    let eps = reducer.epsilon;
    let n = scenario.n;
    let c1 = scenario.constants.c1;
    let sign = if maximum { -1.0 } else { 1.0 };
    if x_set.is_empty() || !(delta > 0.0) {
        return Err(Error::Invalid("the sandwich needs a nonempty X and δ > 0".into()));
    }
    let dist_to_x = |y: &[f64]| -> f64 {
        x_set
            .iter()
            .map(|x| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let mut a = f64::NEG_INFINITY;
    for x in x_set {
        a = a.max(sign * aux.value(x)?);
    }
    // boundary of X_δ: points at distance δ from X not closer to another point
    let dirs = unit_directions(n);
    let mut boundary = Vec::new();
    for x in x_set {
        for d in &dirs {
            let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + delta * b).collect();
            if dist_to_x(&y) >= delta * (1.0 - 1e-12) {
                boundary.push(y);
            }
        }
    }
    let mut b = f64::INFINITY;
    for y in &boundary {
        b = b.min(sign * aux.value(y)?);
    }
    if !(b > a) {
        return Err(Error::InvalidDelta {
            boundary_inf: b,
            interior_sup: a,
        });
    }
    let level = c1 * (a + b) / 2.0;
    let phi = |x: &[f64]| -> Result<f64> {
        let xi: Vec<f64> = x.iter().map(|v| v / eps).collect();
        Ok(sign * reducer.phi(&xi)?)
    };
    let mut inner_max = f64::NEG_INFINITY;
    for x in x_set {
        inner_max = inner_max.max(phi(x)?);
    }
    let mut boundary_min = f64::INFINITY;
    for y in &boundary {
        boundary_min = boundary_min.min(phi(y)?);
    }
    // interior mesh, for the size of Y^ε
    let m = mesh_per_axis.max(2);
    let mut mesh_points = 0;
    let mut y_points = 0;
    for x in x_set {
        let total = m.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut y = x.clone();
            for yi in y.iter_mut() {
                let j = rem % m;
                rem /= m;
                *yi += delta * (-1.0 + 2.0 * j as f64 / (m - 1) as f64);
            }
            if dist_to_x(&y) > delta {
                continue;
            }
            mesh_points += 1;
            if phi(&y)? <= level {
                y_points += 1;
            }
        }
    }
    Ok(SandwichReport {
        epsilon: eps,
        delta,
        a: sign * a,
        b: sign * b,
        level: sign * level,
        inner_margin: level - inner_max,
        boundary_margin: boundary_min - level,
        mesh_points,
        y_points,
        inner_holds: inner_max <= level,
        avoids_boundary: boundary_min > level,
    })
}

/// Directions on the unit sphere: `±e_i` in 1D, 16 angles in 2D, and the
/// 26 normalized neighbours of the cube lattice in 3D.
fn unit_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|j| {
                let t = core::f64::consts::PI * j as f64 / 8.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    for c in -1i32..=1 {
                        if a == 0 && b == 0 && c == 0 {
                            continue;
                        }
                        let v = [a as f64, b as f64, c as f64];
                        let l = norm(&v);
                        out.push(v.iter().map(|x| x / l).collect());
                    }
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify(&[1.0, 2.0]), CriticalKind::Min);
        assert_eq!(classify(&[-1.0, -2.0]), CriticalKind::Max);
        assert_eq!(classify(&[-1.0, 2.0]), CriticalKind::Saddle(1));
        assert_eq!(classify(&[1e-9, 2.0]), CriticalKind::Degenerate);
        assert_eq!(classify(&[0.0, 0.0]), CriticalKind::Degenerate);
    }

    #[test]
    fn topology_table() {
        let m = MultiplicityMode::CupLength;
        assert_eq!(predict_multiplicity(&Topology::parse("point").unwrap(), m).unwrap(), 1);
        assert_eq!(predict_multiplicity(&Topology::parse("circle").unwrap(), m).unwrap(), 2);
        assert_eq!(predict_multiplicity(&Topology::parse("sphere(3)").unwrap(), m).unwrap(), 2);
        assert_eq!(predict_multiplicity(&Topology::parse("torus(2)").unwrap(), m).unwrap(), 3);
        let prod = Topology::parse("circle x sphere(2)").unwrap();
        assert_eq!(predict_multiplicity(&prod, MultiplicityMode::Category).unwrap(), 3);
        assert!(Topology::parse("klein bottle").is_err());
        assert!(Topology::parse("sphere(0)").is_err());
    }

    #[test]
    fn lattice_is_centred() {
        let r = Region::cube(2, 1.0).unwrap();
        let pts = r.lattice(4);
        assert_eq!(pts.len(), 4);
        assert!(pts.contains(&vec![-0.5, 0.5]));
    }
}
