//! Numerical core for the finite-dimensional reduction of the semiclassical
//! nonlinear Schrödinger equation `-Δu + u + V(εx)u = K(εx)u^p` in ℝⁿ.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// when std is anywhere in the build graph its inherent float methods shadow
// `num_traits::Float`, which then looks unused
#![allow(unused_imports)]

extern crate alloc;

pub mod ansatz;
pub mod constrained;
pub mod discretize;
pub mod error;
pub mod exec;
pub mod expr;
pub mod landscape;
pub mod linalg;
pub mod problem;
pub mod profile;
pub mod reduction;
pub mod scenario;
pub mod solver;
pub mod symmetry;

pub use error::{Error, Result};
pub use expr::ScalarFieldExpr;
pub use profile::{ProfileConstants, RadialProfile};
