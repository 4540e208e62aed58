//! Dense, banded and Krylov kernels used by the discretization.
//!
//! Everything here is sequential and allocation-explicit so that identical
//! inputs produce bit-identical outputs.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_traits::Float;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric banded matrix stored by lower diagonals, factored in place by
/// Cholesky.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-d] at i*(bw+1)+d
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the SPD matrix whose entries are produced by `entry(i, j)` for
    /// `j <= i` and `i - j <= bw`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                band[i * w + (i - j)] = entry(i, j);
            }
        }
        for j in 0..n {
            let jlo = j.saturating_sub(bw);
            let mut s = band[j * w];
            for k in jlo..j {
                let l = band[j * w + (j - k)];
                s -= l * l;
            }
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite(j));
            }
            let djj = s.sqrt();
            band[j * w] = djj;
            let iend = (j + bw + 1).min(n);
            for i in (j + 1)..iend {
                let ilo = i.saturating_sub(bw).max(jlo);
                let mut s = band[i * w + (i - j)];
                for k in ilo..j {
                    s -= band[i * w + (i - k)] * band[j * w + (j - k)];
                }
                band[i * w + (i - j)] = s / djj;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.band[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.band[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw + 1).min(self.n);
            let mut s = x[i];
            for k in (i + 1)..hi {
                s -= self.band[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.band[i * w];
        }
    }

    /// `y = L Lᵀ x`, the factored matrix itself.
    pub fn multiply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.bw + 1;
        let mut t = vec![0.0; self.n];
        for (i, ti) in t.iter_mut().enumerate() {
            let hi = (i + self.bw + 1).min(self.n);
            *ti = (i..hi).map(|k| self.band[k * w + (k - i)] * x[k]).sum();
        }
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            y[i] = (lo..=i).map(|k| self.band[i * w + (i - k)] * t[k]).sum();
        }
    }
}

/// Outcome of a MINRES solve.
#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Estimated preconditioned residual norm relative to the right-hand side.
    pub rel_residual: f64,
    pub converged: bool,
    /// Smallest |Ritz value| of the Lanczos tridiagonal built during the
    /// solve, a proxy for the smallest singular value of the operator.
    /// Only computed when the solve failed (NaN otherwise).
    pub sigma_min: f64,
}

/// Preconditioned MINRES for a symmetric operator with an SPD preconditioner.
///
/// `apply` computes `y = K v`; `precond` overwrites its argument with
/// `M^{-1} r`.
pub fn minres(
    b: &[f64],
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&mut [f64]),
    tol: f64,
    max_iter: usize,
) -> MinresOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = r1.clone();
    precond(&mut y);
    let beta1 = dot(&r1, &y).max(0.0).sqrt();
    if beta1 == 0.0 {
        return MinresOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            sigma_min: f64::NAN,
        };
    }
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for itn in 1..=max_iter {
        iterations = itn;
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        apply(&v, &mut y);
        if itn >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        core::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&mut y);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        alphas.push(alfa);
        betas.push(beta);
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= tol * beta1 || beta == 0.0 {
            converged = true;
            break;
        }
    }
    let k = alphas.len();
    let off: Vec<f64> = betas[..k.saturating_sub(1)].to_vec();
    let sigma_min = if converged {
        f64::NAN
    } else {
        tridiag_eigenvalues(&alphas, &off)
            .into_iter()
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min)
    };
    MinresOutcome {
        x,
        iterations,
        rel_residual: phibar / beta1,
        converged,
        sigma_min,
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (1.0 + x.abs());
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues (ascending) of a symmetric tridiagonal matrix, by Sturm
/// bisection.
pub fn tridiag_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 }
            + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a <= 4.0 * f64::EPSILON * scale {
                    break;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Eigen-decomposition of a dense symmetric matrix (row-major). Eigenvalues
/// ascending; eigenvectors as columns of the returned row-major matrix, each
/// with its largest-magnitude entry positive so results are reproducible.
pub fn sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (c, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let big = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vecs[k * n + c] = sign * col[k];
        }
    }
    (vals, vecs)
}

/// Solve a small dense system by LU with partial pivoting.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|x| x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag_matrix(n: usize) -> impl Fn(usize, usize) -> f64 {
        move |i, j| {
            let _ = n;
            if i == j {
                2.5
            } else if i - j == 1 {
                -1.0
            } else {
                0.0
            }
        }
    }

    #[test]
    fn banded_cholesky_solves_tridiagonal() {
        let n = 50;
        let f = tridiag_matrix(n);
        let chol = BandedCholesky::factor(n, 1, &f).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = 2.5 * xs[i] - if i > 0 { xs[i - 1] } else { 0.0 } - if i + 1 < n { xs[i + 1] } else { 0.0 };
        }
        chol.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let err = BandedCholesky::factor(3, 1, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(matches!(err, Err(Error::NotPositiveDefinite(0))));
    }

    #[test]
    fn minres_solves_indefinite_diagonal() {
        let d: Vec<f64> = (0..40).map(|i| if i == 3 { -2.0 } else { 1.0 + i as f64 }).collect();
        let b: Vec<f64> = (0..40).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let out = minres(
            &b,
            |v, y| {
                for i in 0..v.len() {
                    y[i] = d[i] * v[i];
                }
            },
            |_| {},
            1e-13,
            200,
        );
        assert!(out.converged);
        for i in 0..40 {
            assert!((out.x[i] - b[i] / d[i]).abs() < 1e-10);
        }
        assert!(out.sigma_min.is_nan());
    }

    #[test]
    fn minres_reports_singular_operator() {
        let d: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let b = vec![1.0; 20];
        let out = minres(
            &b,
            |v, y| {
                for i in 0..v.len() {
                    y[i] = d[i] * v[i];
                }
            },
            |_| {},
            1e-12,
            100,
        );
        assert!(!out.converged);
        assert!(out.sigma_min < 1e-6);
    }

    #[test]
    fn tridiagonal_spectrum_matches_closed_form() {
        let n = 12;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        let ev = tridiag_eigenvalues(&diag, &off);
        for (k, e) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * (core::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((e - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let a = [4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, -3.0];
        let (vals, vecs) = sym_eigen(&a, 3);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs[i * 3 + k] * vals[k] * vecs[j * 3 + k]).sum();
                assert!((r - a[i * 3 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_solve_with_pivoting() {
        let a = [0.0, 1.0, 1.0, 0.0];
        let x = solve_dense(&a, &[2.0, 3.0], 2).unwrap();
        assert_eq!(x, vec![3.0, 2.0]);
    }
}
