//! The positive radial ground state `U` of `-ΔU + U = U^p` in ℝⁿ.
//!
//! For `n = 1` the closed form
//! `U(x) = ((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)x/2)` is used directly.
//! Otherwise the radial ODE is shot from `r = 0` on the height `U(0)`,
//! bisecting between trajectories that cross zero and trajectories that turn
//! back up. Beyond a matching radius the profile continues with the decaying
//! solution of the linearized equation, `c·r^{-(n-1)/2} e^{-r}` times its
//! modified-Bessel asymptotic series.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Critical Sobolev exponent `2* = 2n/(n-2)`, infinite for `n ≤ 2`.
pub fn critical_exponent(n: usize) -> f64 {
    if n <= 2 {
        f64::INFINITY
    } else {
        2.0 * n as f64 / (n as f64 - 2.0)
    }
}

pub fn check_exponent(n: usize, p: f64) -> Result<()> {
    let upper = critical_exponent(n);
    if n == 0 || !(p > 1.0 && p < upper) {
        return Err(Error::ExponentRange { p, n, upper });
    }
    Ok(())
}

/// Surface measure `|S^{n-1}| = 2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    // Γ(n/2) for integer n via Γ(1/2) = √π, Γ(1) = 1, Γ(x+1) = xΓ(x)
    let (mut g, mut x) = if n % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = n as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    2.0 * PI.powf(n as f64 / 2.0) / g
}

/// Clamped cubic spline on a uniform grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    pub fn clamped(x0: f64, h: f64, y: &[f64], d_start: f64, d_end: f64) -> Self {
        let n = y.len();
        assert!(n >= 2);
        let mut a = vec![1.0; n];
        let mut b = vec![4.0; n];
        let mut c = vec![1.0; n];
        let mut r = vec![0.0; n];
        b[0] = 2.0;
        b[n - 1] = 2.0;
        a[0] = 0.0;
        c[n - 1] = 0.0;
        r[0] = 6.0 / h * ((y[1] - y[0]) / h - d_start);
        r[n - 1] = 6.0 / h * (d_end - (y[n - 1] - y[n - 2]) / h);
        for i in 1..n - 1 {
            r[i] = 6.0 / (h * h) * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        }
        // Thomas algorithm
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            r[i] -= w * r[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = r[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
        }
        Self {
            x0,
            h,
            y: y.to_vec(),
            m,
        }
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.x0) / self.h).max(0.0);
        let i = (s.floor() as usize).min(self.y.len() - 2);
        (i, x - (self.x0 + i as f64 * self.h))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let h = self.h;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let b = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * mi + mj) / 6.0;
        self.y[i] + t * (b + t * (0.5 * mi + t * (mj - mi) / (6.0 * h)))
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        let h = self.h;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let b = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * mi + mj) / 6.0;
        b + t * (mi + t * (mj - mi) / (2.0 * h))
    }
}

/// Asymptotic series coefficients of `r^{1/2} e^{±r} K_ν / I_ν`.
fn bessel_series(n: usize, growing: bool) -> Vec<f64> {
    let nu = n as f64 / 2.0 - 1.0;
    let mu = 4.0 * nu * nu;
    let mut coeffs = vec![1.0];
    let mut c = 1.0;
    for k in 1..=8 {
        let odd = (2 * k - 1) as f64;
        c *= (mu - odd * odd) / (k as f64 * 8.0);
        if c == 0.0 {
            break;
        }
        coeffs.push(if growing && k % 2 == 1 { -c } else { c });
    }
    coeffs
}

/// `r^{-(n-1)/2} e^{∓r} S(r)` and its derivative, with the series truncated
/// before its terms start to grow.
fn radial_mode(coeffs: &[f64], n: usize, r: f64, growing: bool) -> (f64, f64) {
    let a = (n as f64 - 1.0) / 2.0;
    let mut s = 0.0;
    let mut ds = 0.0;
    let mut last = f64::INFINITY;
    for (k, c) in coeffs.iter().enumerate() {
        let term = c * r.powi(-(k as i32));
        if term.abs() > last {
            break;
        }
        last = term.abs();
        s += term;
        ds += -(k as f64) * term / r;
    }
    let sign = if growing { 1.0 } else { -1.0 };
    let base = r.powf(-a) * (sign * r).exp();
    let v = base * s;
    (v, base * (s * (-a / r + sign) + ds))
}

#[derive(Debug, Clone, PartialEq)]
enum Interp {
    Closed { amp: f64, q: f64, beta: f64 },
    Spline { u: UniformSpline, du: UniformSpline },
}

/// The radial ground state: samples, interpolant and tail model.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub n: usize,
    pub p: f64,
    pub r_samples: Vec<f64>,
    pub u_samples: Vec<f64>,
    pub du_samples: Vec<f64>,
    pub r_max: f64,
    /// Prefactor `c` of the tail `c·r^{-(n-1)/2} e^{-r}·S(r)`.
    pub decay_rate: f64,
    tail_coeffs: Vec<f64>,
    interp: Interp,
}

/// Integral constants of the ground state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConstants {
    /// `∫ U^{p+1}`
    pub c0: f64,
    /// `∫ U²`
    pub l2sq: f64,
    /// `∫ |∇U|² + U²`
    pub h1sq: f64,
    /// `C0 (1/2 - 1/(p+1))`
    pub c1: f64,
}

/// Options for the shooting solver.
#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    /// RK4 step in r; also the sample spacing.
    pub step: f64,
    /// Matching threshold relative to `U(0)` where the tail model takes over.
    pub match_level: f64,
    /// `U(R_max) < tail_level · U(0)`.
    pub tail_level: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            step: 0.005,
            match_level: 1e-5,
            tail_level: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shot {
    Crossed,
    Turned,
    Undecided,
}

fn rhs(n: usize, p: f64, r: f64, u: f64, v: f64) -> (f64, f64) {
    let nl = u.max(0.0).powf(p);
    if r == 0.0 {
        (v, (u - nl) / n as f64)
    } else {
        (v, -(n as f64 - 1.0) / r * v + u - nl)
    }
}

fn rk4_step(n: usize, p: f64, r: f64, u: f64, v: f64, h: f64) -> (f64, f64) {
    let (k1u, k1v) = rhs(n, p, r, u, v);
    let (k2u, k2v) = rhs(n, p, r + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
    let (k3u, k3v) = rhs(n, p, r + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
    let (k4u, k4v) = rhs(n, p, r + h, u + h * k3u, v + h * k3v);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Coefficients `a_k` of `U(r) = Σ a_k r^{2k}` near the origin.
///
/// The Laplacian maps `r^{2k+2}` to `(2k+2)(2k+n) r^{2k}` and the power `U^p`
/// of a series is expanded with Miller's recurrence.
fn origin_series(n: usize, p: f64, s: f64, terms: usize) -> Vec<f64> {
    let mut a = vec![s];
    let mut b = vec![s.powf(p)];
    for k in 0..terms - 1 {
        let c = a[k] - b[k];
        a.push(c / ((2 * k + 2) as f64 * (2 * k + n) as f64));
        let m = k + 1;
        let mut acc = 0.0;
        for j in 1..=m {
            acc += ((p + 1.0) * j as f64 - m as f64) * a[j] * b[m - j];
        }
        b.push(acc / (m as f64 * s));
    }
    a
}

fn eval_series(a: &[f64], r: f64) -> (f64, f64) {
    let t = r * r;
    let (mut u, mut du) = (0.0, 0.0);
    for (k, c) in a.iter().enumerate().rev() {
        u = u * t + c;
        if k > 0 {
            du = du * t + 2.0 * k as f64 * c;
        }
    }
    // du accumulated Σ 2k a_k t^{k-1}
    (u, du * r)
}

/// Radius covered by the origin series before RK4 takes over.
const SERIES_RADIUS: f64 = 0.2;

/// Integrate from height `s`; optionally record samples.
fn trajectory(n: usize, p: f64, s: f64, h: f64, r_end: f64, mut record: Option<&mut Vec<(f64, f64)>>) -> Shot {
    let series = origin_series(n, p, s, 40);
    let start = ((SERIES_RADIUS / h).round() as usize).max(1);
    if let Some(rec) = record.as_deref_mut() {
        for k in 0..start {
            rec.push(eval_series(&series, k as f64 * h));
        }
    }
    let (mut u, mut v) = eval_series(&series, start as f64 * h);
    if let Some(rec) = record.as_deref_mut() {
        rec.push((u, v));
    }
    let steps = (r_end / h).ceil() as usize;
    for k in start..steps {
        let r = k as f64 * h;
        let (nu, nv) = rk4_step(n, p, r, u, v, h);
        u = nu;
        v = nv;
        if let Some(rec) = record.as_deref_mut() {
            rec.push((u, v));
        }
        if u <= 0.0 {
            return Shot::Crossed;
        }
        if v > 0.0 {
            return Shot::Turned;
        }
    }
    Shot::Undecided
}

fn closed_form_params(p: f64) -> (f64, f64, f64) {
    ((0.5 * (p + 1.0)).powf(1.0 / (p - 1.0)), 2.0 / (p - 1.0), 0.5 * (p - 1.0))
}

fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

impl RadialProfile {
    /// Ground state for dimension `n` and exponent `p` with default options.
    pub fn ground_state(n: usize, p: f64) -> Result<Self> {
        check_exponent(n, p)?;
        if n == 1 {
            Self::closed_form(p, ShootingOptions::default())
        } else {
            Self::shoot(n, p, ShootingOptions::default())
        }
    }

    /// Closed-form one-dimensional ground state.
    pub fn closed_form(p: f64, opts: ShootingOptions) -> Result<Self> {
        check_exponent(1, p)?;
        let (amp, q, beta) = closed_form_params(p);
        let interp = Interp::Closed { amp, q, beta };
        // U(r) < tail_level·amp once sech^q(βr) < tail_level
        let r_max = ((2.0f64).powf(q) / opts.tail_level).ln();
        let count = (r_max / opts.step).ceil() as usize + 1;
        let mut prof = Self {
            n: 1,
            p,
            r_samples: Vec::with_capacity(count),
            u_samples: Vec::with_capacity(count),
            du_samples: Vec::with_capacity(count),
            r_max: (count - 1) as f64 * opts.step,
            decay_rate: amp * (2.0f64).powf(q),
            tail_coeffs: bessel_series(1, false),
            interp,
        };
        for k in 0..count {
            let r = k as f64 * opts.step;
            prof.r_samples.push(r);
            prof.u_samples.push(prof.eval(r));
            prof.du_samples.push(prof.deriv(r));
        }
        Ok(prof)
    }

    /// Radial shooting for any `n ≥ 1` (for `n = 1` this is the independent
    /// cross-check of the closed form).
    pub fn shoot(n: usize, p: f64, opts: ShootingOptions) -> Result<Self> {
        check_exponent(n, p)?;
        let h = opts.step;
        let r_end = 80.0;
        // bracket: low heights turn back up, high heights cross zero
        let mut lo = 1.0 + 1e-9;
        if trajectory(n, p, lo, h, r_end, None) != Shot::Turned {
            return Err(Error::Shooting(format!("height {lo} does not turn back up")));
        }
        let mut hi = 2.0;
        let mut tries = 0;
        while trajectory(n, p, hi, h, r_end, None) != Shot::Crossed {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                return Err(Error::Shooting(format!(
                    "no zero crossing found for heights in [{lo}, {hi}]"
                )));
            }
        }
        let (lo0, hi0) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match trajectory(n, p, mid, h, r_end, None) {
                Shot::Crossed => hi = mid,
                Shot::Turned => lo = mid,
                Shot::Undecided => {
                    return Err(Error::Shooting(format!(
                        "undecided trajectory at height {mid} (bracket [{lo0}, {hi0}])"
                    )))
                }
            }
        }
        let s = 0.5 * (lo + hi);
        let mut rec = Vec::new();
        trajectory(n, p, s, h, r_end, Some(&mut rec));
        let u0 = rec[0].0;
        // last index before the trajectory leaves the decaying branch
        let k_match = rec
            .iter()
            .position(|&(u, _)| u < opts.match_level * u0)
            .ok_or_else(|| Error::Shooting("trajectory left the ground-state branch before the matching level".into()))?;
        if k_match < 4 {
            return Err(Error::Shooting("matching radius too small".into()));
        }
        let r_match = k_match as f64 * h;
        let (um, vm) = rec[k_match];
        let dec = bessel_series(n, false);
        let gro = bessel_series(n, true);
        let (g, dg) = radial_mode(&dec, n, r_match, false);
        let (gg, dgg) = radial_mode(&gro, n, r_match, true);
        let c = (um * dgg - vm * gg) / (g * dgg - dg * gg);
        if !(c > 0.0) {
            return Err(Error::Shooting(format!("non-positive tail prefactor {c}")));
        }
        let mut r_max = r_match;
        while c * radial_mode(&dec, n, r_max, false).0 >= opts.tail_level * u0 {
            r_max += h;
        }
        let count = (r_max / h).round() as usize + 1;
        let mut r_samples = Vec::with_capacity(count);
        let mut u_samples = Vec::with_capacity(count);
        let mut du_samples = Vec::with_capacity(count);
        for k in 0..count {
            let r = k as f64 * h;
            r_samples.push(r);
            if k < k_match {
                u_samples.push(rec[k].0);
                du_samples.push(rec[k].1);
            } else {
                let (t, dt) = radial_mode(&dec, n, r, false);
                u_samples.push(c * t);
                du_samples.push(c * dt);
            }
        }
        Self::from_samples(n, p, r_samples, u_samples, du_samples, c)
    }

    /// Rebuild a profile from uniform samples (e.g. loaded from a cache file).
    pub fn from_samples(
        n: usize,
        p: f64,
        r_samples: Vec<f64>,
        u_samples: Vec<f64>,
        du_samples: Vec<f64>,
        decay_rate: f64,
    ) -> Result<Self> {
        check_exponent(n, p)?;
        let k = r_samples.len();
        if k < 4 || u_samples.len() != k || du_samples.len() != k {
            return Err(Error::Invalid("profile needs at least 4 consistent samples".into()));
        }
        let h = r_samples[1] - r_samples[0];
        if r_samples[0] != 0.0 || !(h > 0.0) {
            return Err(Error::Invalid("profile samples must start at r = 0 with positive spacing".into()));
        }
        for (i, r) in r_samples.iter().enumerate() {
            if (r - i as f64 * h).abs() > 1e-9 * (1.0 + r) {
                return Err(Error::Invalid("profile samples must be uniformly spaced".into()));
            }
        }
        let d2_end = u_samples[k - 1] - (n as f64 - 1.0) / r_samples[k - 1] * du_samples[k - 1];
        // the U' spline is clamped with U''(0) = (U(0) - U(0)^p)/n
        let interp = Interp::Spline {
            u: UniformSpline::clamped(0.0, h, &u_samples, 0.0, du_samples[k - 1]),
            du: UniformSpline::clamped(
                0.0,
                h,
                &du_samples,
                (u_samples[0] - u_samples[0].powf(p)) / n as f64,
                d2_end,
            ),
        };
        Ok(Self {
            n,
            p,
            r_max: r_samples[k - 1],
            r_samples,
            u_samples,
            du_samples,
            decay_rate,
            tail_coeffs: bessel_series(n, false),
            interp,
        })
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.interp, Interp::Closed { .. })
    }

    pub fn peak(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn step(&self) -> f64 {
        self.r_samples[1] - self.r_samples[0]
    }

    /// `U(r)` for `r ≥ 0`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.interp {
            Interp::Closed { amp, q, beta } => amp * sech(beta * r).powf(*q),
            Interp::Spline { u, .. } => {
                if r <= self.r_max {
                    u.eval(r)
                } else {
                    self.decay_rate * radial_mode(&self.tail_coeffs, self.n, r, false).0
                }
            }
        }
    }

    /// `U'(r)` for `r ≥ 0`.
    pub fn deriv(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.interp {
            Interp::Closed { amp, q, beta } => {
                let x = beta * r;
                -amp * q * beta * sech(x).powf(*q) * x.tanh()
            }
            Interp::Spline { du, .. } => {
                if r <= self.r_max {
                    du.eval(r)
                } else {
                    self.decay_rate * radial_mode(&self.tail_coeffs, self.n, r, false).1
                }
            }
        }
    }

    /// `U''(r)` from the interpolant of `U'` (closed form for `n = 1`).
    pub fn second_deriv(&self, r: f64) -> f64 {
        match &self.interp {
            Interp::Closed { .. } => {
                let u = self.eval(r);
                u - u.powf(self.p)
            }
            Interp::Spline { du, .. } => {
                if r <= self.r_max {
                    du.deriv(r)
                } else {
                    let u = self.eval(r);
                    u - (self.n as f64 - 1.0) / r * self.deriv(r)
                }
            }
        }
    }

    /// Radius where `U` drops to half its peak.
    pub fn half_height_radius(&self) -> f64 {
        let target = 0.5 * self.peak();
        let (mut a, mut b) = (0.0, self.r_max);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if self.eval(m) > target {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Sup-norm residual of the radial ODE evaluated on the interpolant over
    /// `[0, R_max]`, sampled at panel midpoints and nodes.
    pub fn ode_residual(&self) -> f64 {
        let n = self.n as f64;
        let h = self.step();
        let mut worst: f64 = 0.0;
        let count = self.r_samples.len() * 2 - 1;
        for k in 0..count {
            let r = k as f64 * 0.5 * h;
            let u = self.eval(r);
            let lap = if r == 0.0 {
                n * self.second_deriv(0.0)
            } else {
                self.second_deriv(r) + (n - 1.0) / r * self.deriv(r)
            };
            worst = worst.max((-lap + u - u.max(0.0).powf(self.p)).abs());
        }
        worst
    }

    fn radial_integral(&self, panel: f64, f: impl Fn(f64) -> f64) -> f64 {
        // 5-point Gauss-Legendre per panel, extended 12 units past R_max
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_47,
            0.478_628_670_499_366_47,
            0.236_926_885_056_189_08,
            0.236_926_885_056_189_08,
        ];
        let end = self.r_max + 12.0;
        let panels = (end / panel).ceil() as usize;
        let nm1 = self.n as i32 - 1;
        let mut total = 0.0;
        for j in 0..panels {
            let a = j as f64 * panel;
            let mid = a + 0.5 * panel;
            let mut s = 0.0;
            for (x, w) in X.iter().zip(W) {
                let r = mid + 0.5 * panel * x;
                s += w * r.powi(nm1) * f(r);
            }
            total += 0.5 * panel * s;
        }
        total * sphere_area(self.n)
    }

    /// `C0`, `∫U²`, `‖U‖²_{W^{1,2}}` and `C1`, with quadrature error checked
    /// against a halved panel width.
    pub fn constants(&self) -> Result<ProfileConstants> {
        let p = self.p;
        let panel = self.step();
        let compute = |panel: f64| {
            let c0 = self.radial_integral(panel, |r| self.eval(r).max(0.0).powf(p + 1.0));
            let l2 = self.radial_integral(panel, |r| self.eval(r).powi(2));
            let g2 = self.radial_integral(panel, |r| self.deriv(r).powi(2));
            (c0, l2, l2 + g2)
        };
        let (c0, l2sq, h1sq) = compute(panel);
        let (c0f, l2f, h1f) = compute(0.5 * panel);
        for (a, b, name) in [(c0, c0f, "C0"), (l2sq, l2f, "L2"), (h1sq, h1f, "H1")] {
            if ((a - b) / b).abs() > 1e-8 {
                return Err(Error::Quadrature(format!("{name}: {a} vs refined {b}")));
            }
        }
        Ok(ProfileConstants {
            c0: c0f,
            l2sq: l2f,
            h1sq: h1f,
            c1: c0f * (0.5 - 1.0 / (p + 1.0)),
        })
    }
}
