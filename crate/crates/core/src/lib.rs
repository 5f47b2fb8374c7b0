//! Logarithm representations of generators of invertible evolution families
//! on `Cⁿ`, and power-series solvers for the associated linear Cauchy
//! problems.
//!
//! The pipeline: build an evolution family `U(t,s)` from a commuting
//! generator ([`evolution`]), pick a shift `κ` that separates the spectrum of
//! `U(t,s) + κI` from the origin ([`logrep::select_kappa`]), evaluate
//! `a(t,s) = Log(U(t,s) + κI)` as a Dunford-Riesz contour integral
//! ([`contour`]), and recover the generator as
//! `A(t) = (I + κU(s,t))·∂ₜa(t,s)` ([`logrep::reconstruct_generator`]).
//! [`cauchy`] solves `u' = A(t)u + f(t)` from `e^{a(t,s)} − κI`, and
//! [`harness`] drives all of it from JSON scenario files.

// `!(x > 0.0)` is how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cauchy;
pub mod contour;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod logrep;
#[cfg(test)]
mod properties;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
