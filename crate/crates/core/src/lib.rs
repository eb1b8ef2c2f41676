//! Numerical laboratory for global Yamabe flow on conformally flat model
//! manifolds: Green-function Poisson potentials, the flow itself on an
//! exhaustion by balls, and the curvature inequalities evaluated along it.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod poisson;

pub use error::{Error, Result};
