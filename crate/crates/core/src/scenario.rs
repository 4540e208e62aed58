//! A problem instance: dimension, exponent, potential `V` and weight `K`.

use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::expr::ScalarFieldExpr;
use crate::profile::{check_exponent, ProfileConstants, RadialProfile};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub n: usize,
    pub p: f64,
    pub v: ScalarFieldExpr,
    pub k: ScalarFieldExpr,
    pub profile: RadialProfile,
    pub constants: ProfileConstants,
}

/// Extremes of the coefficients over a sampled box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisReport {
    pub inf_one_plus_v: f64,
    pub sup_v: f64,
    pub inf_k: f64,
    pub sup_k: f64,
    pub samples: usize,
}

impl Scenario {
    pub fn new(n: usize, p: f64, v: &str, k: &str) -> Result<Self> {
        check_exponent(n, p)?;
        let v = ScalarFieldExpr::parse(v, n)?;
        let k = ScalarFieldExpr::parse(k, n)?;
        let profile = RadialProfile::ground_state(n, p)?;
        Self::with_profile(v, k, profile)
    }

    pub fn with_profile(v: ScalarFieldExpr, k: ScalarFieldExpr, profile: RadialProfile) -> Result<Self> {
        let (n, p) = (profile.n, profile.p);
        if v.dim() != n || k.dim() != n {
            return Err(Error::Invalid(format!(
                "expressions over ℝ^{} and ℝ^{} for a problem in ℝ^{n}",
                v.dim(),
                k.dim()
            )));
        }
        let constants = profile.constants()?;
        Ok(Self {
            n,
            p,
            v,
            k,
            profile,
            constants,
        })
    }

    /// `θ = (p+1)/(p-1) - n/2`.
    pub fn theta(&self) -> f64 {
        (self.p + 1.0) / (self.p - 1.0) - self.n as f64 / 2.0
    }

    /// `γ = min(1, p-1)`.
    pub fn gamma(&self) -> f64 {
        (self.p - 1.0).min(1.0)
    }

    pub fn v_at(&self, x: &[f64]) -> Result<f64> {
        self.v.eval(x)
    }

    pub fn k_at(&self, x: &[f64]) -> Result<f64> {
        self.k.eval(x)
    }

    /// `V` and `K` both constant: every translate of the ansatz is exact.
    pub fn is_translation_invariant(&self) -> bool {
        self.v.is_constant() && self.k.is_constant()
    }

    /// Sample `1 + V > 0` and `K > 0` on a lattice of `resolution` points per
    /// axis over `[-half_width, half_width]ⁿ`.
    pub fn check_hypotheses(&self, half_width: f64, resolution: usize) -> Result<HypothesisReport> {
        let res = resolution.max(2);
        let total = res.pow(self.n as u32);
        let mut rep = HypothesisReport {
            inf_one_plus_v: f64::INFINITY,
            sup_v: f64::NEG_INFINITY,
            inf_k: f64::INFINITY,
            sup_k: f64::NEG_INFINITY,
            samples: total,
        };
        let mut x = [0.0; 3];
        for idx in 0..total {
            let mut rem = idx;
            for xi in x.iter_mut().take(self.n) {
                let j = rem % res;
                rem /= res;
                *xi = -half_width + 2.0 * half_width * j as f64 / (res - 1) as f64;
            }
            let pt = &x[..self.n];
            let v = self.v.eval(pt)?;
            let k = self.k.eval(pt)?;
            let fail = |what: String| Err(Error::Hypothesis(format!("{what} at {pt:?}")));
            if !(1.0 + v > 0.0) {
                return fail(format!("1 + V = {} is not positive", 1.0 + v));
            }
            if !(k > 0.0) {
                return fail(format!("K = {k} is not positive"));
            }
            rep.inf_one_plus_v = rep.inf_one_plus_v.min(1.0 + v);
            rep.sup_v = rep.sup_v.max(v);
            rep.inf_k = rep.inf_k.min(k);
            rep.sup_k = rep.sup_k.max(k);
        }
        Ok(rep)
    }
}
