//! Uniform Cartesian grids with homogeneous Dirichlet truncation, centered
//! finite-difference Laplacians, discrete inner products and the Riesz map of
//! the `W^{1,2}` inner product.
//!
//! A [`Field`] stores only interior nodes; the boundary is identically zero.
//! The last axis varies fastest in the linear index.
//!
//! Stencils of order 2, 4, 6 and 8 are available. Points of a wide stencil
//! that fall outside the box read as zero, which is consistent with the
//! truncation because every field of interest is below `1e-8` of its peak
//! there.
//!
//! The discrete `W^{1,2}` product is `⟨u, v⟩ = hⁿ uᵀ A v` with
//! `A = -Δ_h + I`. For the second-order stencil `uᵀ(-Δ_h)u` equals the sum of
//! squared forward differences, so this is the usual gradient term.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrixView, DMatrixViewMut};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, BandedCholesky};

pub const MAX_DIM: usize = 3;
pub const MIN_POINTS: usize = 16;

/// One-sided coefficients `c_0, c_1, …` of the centered second difference
/// `u'' ≈ h⁻² (c_0 u_0 + Σ c_k (u_k + u_{-k}))`.
pub fn stencil(order: usize) -> Result<&'static [f64]> {
    const O2: [f64; 2] = [-2.0, 1.0];
    const O4: [f64; 3] = [-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
    const O6: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    const O8: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    match order {
        2 => Ok(&O2),
        4 => Ok(&O4),
        6 => Ok(&O6),
        8 => Ok(&O8),
        _ => Err(Error::InvalidGrid(format!("stencil order {order} not in {{2, 4, 6, 8}}"))),
    }
}

/// A vertex-centered box grid: `m` nodes per axis at `lo[i] + j·h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub lo: [f64; MAX_DIM],
    pub order: usize,
}

impl Grid {
    /// The symmetric box `[-R, R]ⁿ` with `m` nodes per axis.
    pub fn symmetric(n: usize, half_width: f64, m: usize, order: usize) -> Result<Self> {
        let h = 2.0 * half_width / (m as f64 - 1.0);
        let mut lo = [0.0; MAX_DIM];
        for l in lo.iter_mut().take(n) {
            *l = -half_width;
        }
        let g = Self { n, m, h, lo, order };
        g.validate()?;
        Ok(g)
    }

    /// A box of half-width about `radius` around `center`, with nodes on the
    /// global lattice `hℤⁿ`. Windows of equal radius share their matrices.
    pub fn window(n: usize, center: &[f64], radius: f64, h: f64, order: usize) -> Result<Self> {
        if center.len() != n {
            return Err(Error::InvalidGrid(format!("center has {} coordinates, expected {n}", center.len())));
        }
        let half = (radius / h).round() as i64;
        let m = (2 * half + 1) as usize;
        let mut lo = [0.0; MAX_DIM];
        for i in 0..n {
            let k0 = (center[i] / h).round() as i64 - half;
            lo[i] = k0 as f64 * h;
        }
        let g = Self { n, m, h, lo, order };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::InvalidGrid(format!("dimension {} not in 1..={MAX_DIM}", self.n)));
        }
        if self.m < MIN_POINTS {
            return Err(Error::InvalidGrid(format!("{} points per axis, need at least {MIN_POINTS}", self.m)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {} must be positive", self.h)));
        }
        stencil(self.order)?;
        Ok(())
    }

    /// Interior nodes per axis.
    pub fn k(&self) -> usize {
        self.m - 2
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.k().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.m as f64 - 1.0) * self.h
    }

    pub fn center(&self) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate().take(self.n) {
            *ci = self.lo[i] + self.half_width();
        }
        c
    }

    /// Cell volume `hⁿ`.
    pub fn cell(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Same node count, spacing and stencil: such grids share operators.
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.n == other.n && self.m == other.m && self.h == other.h && self.order == other.order
    }

    /// Interior multi-index (1-based node numbers) of a linear index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let k = self.k();
        let mut out = [0; MAX_DIM];
        for axis in (0..self.n).rev() {
            out[axis] = idx % k + 1;
            idx /= k;
        }
        out
    }

    pub fn linear_index(&self, node: &[usize]) -> usize {
        let k = self.k();
        node.iter().take(self.n).fold(0, |acc, &j| acc * k + (j - 1))
    }

    /// Coordinates of interior node `idx`.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.n {
            x[i] = self.lo[i] + mi[i] as f64 * self.h;
        }
        x
    }

    /// Whether the symmetric grid admits a refinement with half the spacing
    /// and the same box, returning it.
    pub fn refined(&self) -> Result<Self> {
        let g = Self {
            m: 2 * self.m - 1,
            h: 0.5 * self.h,
            ..*self
        };
        g.validate()?;
        Ok(g)
    }
}

/// Interior values of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid,
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} unknowns", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let x = grid.point(idx);
            values.push(f(&x[..grid.n])?);
        }
        Self::from_values(grid, values)
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value on the outermost interior layer.
    pub fn boundary_max(&self) -> f64 {
        let k = self.grid.k();
        let mut worst: f64 = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let mi = self.grid.multi_index(idx);
            if mi[..self.grid.n].iter().any(|&j| j == 1 || j == k) {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// Node of the largest value and its coordinates.
    pub fn argmax(&self) -> (usize, [f64; MAX_DIM]) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best, self.grid.point(best))
    }
}

/// `y = -Δ_h x` on the interior of `grid`.
pub fn neg_laplacian(grid: &Grid, x: &[f64], y: &mut [f64]) {
    let c = stencil(grid.order).expect("validated grid");
    let k = grid.k();
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let diag = -(n as f64) * c[0] * inv_h2;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = diag * xi;
    }
    let mut stride = 1;
    for _axis in (0..n).rev() {
        // positions along this axis: (idx / stride) % k
        for (idx, yi) in y.iter_mut().enumerate() {
            let pos = (idx / stride) % k;
            let mut acc = 0.0;
            for (off, ck) in c.iter().enumerate().skip(1) {
                if pos >= off {
                    acc += ck * x[idx - off * stride];
                }
                if pos + off < k {
                    acc += ck * x[idx + off * stride];
                }
            }
            *yi -= acc * inv_h2;
        }
        stride *= k;
    }
}

/// A symmetric linear map on the interior unknowns.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// A symmetric positive definite matrix `M` that can be solved with.
pub trait Preconditioner {
    fn solve_in_place(&self, x: &mut [f64]);
    /// `y = M x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// The identity map, as an operator or a trivial preconditioner.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

impl Preconditioner for Identity {
    fn solve_in_place(&self, _x: &mut [f64]) {}
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// `-Δ_h + I + diag(d)`: with `d = 0` this is the `W^{1,2}` Gram matrix `A`,
/// with `d = V - pKz^{p-1}` the linearization `L` at `z`.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    pub grid: Grid,
    pub diag: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn gram(grid: Grid) -> Self {
        Self {
            diag: vec![0.0; grid.len()],
            grid,
        }
    }

    /// `L = -Δ + 1 + V - p K z^{p-1}` with the positive part of `z`.
    pub fn schrodinger(v: &Field, k: &Field, z: &Field, p: f64) -> Result<Self> {
        v.check_same_grid(k)?;
        v.check_same_grid(z)?;
        let diag = v
            .values
            .iter()
            .zip(&k.values)
            .zip(&z.values)
            .map(|((vv, kk), zz)| vv - p * kk * zz.max(0.0).powf(p - 1.0))
            .collect();
        Ok(Self { grid: v.grid, diag })
    }
}

impl LinearOperator for ShiftedLaplacian {
    fn dim(&self) -> usize {
        self.grid.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        neg_laplacian(&self.grid, x, y);
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi += (1.0 + di) * xi;
        }
    }
}

/// Operators accepted by [`apply_operator`].
#[derive(Debug, Clone, Copy)]
pub enum OperatorKind<'a> {
    /// `-Δ_h`
    Laplacian,
    /// `-Δ_h + 1 + V - p K z^{p-1}`
    Schrodinger { v: &'a Field, k: &'a Field, z: &'a Field, p: f64 },
}

pub fn apply_operator(kind: OperatorKind<'_>, x: &Field) -> Result<Field> {
    let mut out = Field::zeros(x.grid);
    match kind {
        OperatorKind::Laplacian => neg_laplacian(&x.grid, &x.values, &mut out.values),
        OperatorKind::Schrodinger { v, k, z, p } => {
            x.check_same_grid(v)?;
            ShiftedLaplacian::schrodinger(v, k, z, p)?.apply(&x.values, &mut out.values);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerKind {
    L2,
    W12,
}

/// Discrete `L²` or `W^{1,2}` inner product (trapezoidal rule; the boundary
/// nodes carry zero).
pub fn inner(u: &Field, v: &Field, kind: InnerKind) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(inner_raw(&u.grid, &u.values, &v.values, kind))
}

pub fn inner_raw(grid: &Grid, u: &[f64], v: &[f64], kind: InnerKind) -> f64 {
    let dot = crate::linalg::dot(u, v);
    match kind {
        InnerKind::L2 => grid.cell() * dot,
        InnerKind::W12 => {
            let mut lv = vec![0.0; v.len()];
            neg_laplacian(grid, v, &mut lv);
            grid.cell() * (crate::linalg::dot(u, &lv) + dot)
        }
    }
}

pub fn norm(u: &Field, kind: InnerKind) -> f64 {
    inner_raw(&u.grid, &u.values, &u.values, kind).max(0.0).sqrt()
}

/// Direct solver for the Gram matrix `A = -Δ_h + I`.
///
/// In one dimension `A` is banded and factored by Cholesky. In two and three
/// dimensions `A` is a Kronecker sum of one-dimensional matrices, and the
/// one-dimensional eigenbasis diagonalizes it, which costs `O(kⁿ⁺¹)` per solve
/// and no fill-in.
#[derive(Debug, Clone)]
pub enum RieszMap {
    Banded(BandedCholesky),
    Separable {
        k: usize,
        n: usize,
        /// Eigenvectors of the one-dimensional `-D²` as the columns of `Q`,
        /// stored row-major, so the buffer read column-major is `Qᵀ`.
        q: Vec<f64>,
        /// `Qᵀ` stored row-major.
        qt: Vec<f64>,
        /// `1 + Σ λ_{i_axis}` for every multi-index.
        denom: Vec<f64>,
    },
}

impl RieszMap {
    pub fn new(grid: &Grid) -> Result<Self> {
        grid.validate()?;
        let c = stencil(grid.order)?;
        let k = grid.k();
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let one_d = |i: usize, j: usize| {
            let d = i.abs_diff(j);
            if d < c.len() {
                -c[d] * inv_h2
            } else {
                0.0
            }
        };
        if grid.n == 1 {
            let chol = BandedCholesky::factor(k, c.len() - 1, |i, j| one_d(i, j) + if i == j { 1.0 } else { 0.0 })?;
            return Ok(Self::Banded(chol));
        }
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                t[i * k + j] = one_d(i, j);
            }
        }
        let (lam, q) = sym_eigen(&t, k);
        let total = k.pow(grid.n as u32);
        let mut denom = Vec::with_capacity(total);
        for idx in 0..total {
            let mut s = 1.0;
            let mut rem = idx;
            for _ in 0..grid.n {
                s += lam[rem % k];
                rem /= k;
            }
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite(idx));
            }
            denom.push(s);
        }
        let mut qt = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                qt[j * k + i] = q[i * k + j];
            }
        }
        Ok(Self::Separable { k, n: grid.n, q, qt, denom })
    }

    /// Multiply every axis of the tensor `x` by `Q` (or `Qᵀ` when `q` and
    /// `qt` are passed swapped). Every axis uses the same matrix, so the
    /// passes can run from the contiguous index outwards.
    fn transform(k: usize, n: usize, q: &[f64], qt: &[f64], x: &mut [f64], scratch: &mut [f64]) {
        // read column-major, `qt` is `Q` and `q` is `Qᵀ`
        let qm = DMatrixView::from_slice(qt, k, k);
        let qtm = DMatrixView::from_slice(q, k, k);
        let len = x.len();
        {
            let xm = DMatrixView::from_slice(x, k, len / k);
            let mut out = DMatrixViewMut::from_slice(scratch, k, len / k);
            qm.mul_to(&xm, &mut out);
        }
        x.copy_from_slice(scratch);
        let mut stride = k;
        for _axis in 1..n {
            let block = stride * k;
            for (xb, sb) in x.chunks_exact(block).zip(scratch.chunks_exact_mut(block)) {
                let xm = DMatrixView::from_slice(xb, stride, k);
                let mut out = DMatrixViewMut::from_slice(sb, stride, k);
                xm.mul_to(&qtm, &mut out);
            }
            x.copy_from_slice(scratch);
            stride = block;
        }
    }
}

impl Preconditioner for RieszMap {
    fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            RieszMap::Banded(chol) => chol.solve_in_place(x),
            RieszMap::Separable { k, n, q, qt, denom } => {
                let mut scratch = vec![0.0; x.len()];
                Self::transform(*k, *n, qt, q, x, &mut scratch);
                for (xi, d) in x.iter_mut().zip(denom) {
                    *xi /= d;
                }
                Self::transform(*k, *n, q, qt, x, &mut scratch);
            }
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            RieszMap::Banded(chol) => chol.multiply(x, y),
            RieszMap::Separable { k, n, q, qt, denom } => {
                let mut scratch = vec![0.0; x.len()];
                y.copy_from_slice(x);
                Self::transform(*k, *n, qt, q, y, &mut scratch);
                for (yi, d) in y.iter_mut().zip(denom) {
                    *yi *= d;
                }
                Self::transform(*k, *n, q, qt, y, &mut scratch);
            }
        }
    }
}

/// A grid together with its shared Riesz map.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub riesz: Arc<RieszMap>,
}

impl Discretization {
    pub fn new(grid: Grid) -> Result<Self> {
        Ok(Self {
            riesz: Arc::new(RieszMap::new(&grid)?),
            grid,
        })
    }

    /// Reuse this factorization on a translated grid of the same shape.
    pub fn moved_to(&self, grid: Grid) -> Result<Self> {
        if !self.grid.same_shape(&grid) {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, grid)));
        }
        Ok(Self {
            grid,
            riesz: self.riesz.clone(),
        })
    }

    pub fn gram(&self) -> ShiftedLaplacian {
        ShiftedLaplacian::gram(self.grid)
    }

    /// `A x`.
    pub fn apply_gram(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.gram().apply(x, &mut y);
        y
    }

    /// `A⁻¹ x`.
    pub fn riesz_solve(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.riesz.solve_in_place(&mut y);
        y
    }

    /// `W^{1,2}` norm of the Riesz representative of `v ↦ hⁿ gᵀv`.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        let r = self.riesz_solve(g);
        (self.grid.cell() * crate::linalg::dot(g, &r)).max(0.0).sqrt()
    }
}
