//! Phase retrieval through a sequence of nuclear-norm convex relaxations.
//!
//! The unknown complex coefficient vector `a` is recovered from intensity
//! measurements `y = |U a|^2`. Each outer iteration minimizes the nuclear
//! norm of a structured lifted matrix that is affine in `a`; the inner
//! problem is solved by an ADMM that only ever touches 2x2 blocks.
//!
//! Module map:
//! - [`forward_model`]: pupil grids, basis functions, phase diversities and
//!   propagation operators (zonal and modal), simulated measurements.
//! - [`lifted`]: the lifted matrix in block form, 2x2 SVD and thresholding.
//! - [`admm`]: the block-structured ADMM for one nuclear-norm subproblem.
//! - [`copr`]: the outer fixed-point loop.
//! - [`fixedpoint`]: closed-form fixed-point operators for unitary problems.
//! - [`baselines`]: alternating projections.
//! - [`metrics`]: piston-aligned error, SNR and Strehl ratio.
//! - [`io`]: binary/CSV containers and trace export.

pub mod admm;
pub mod baselines;
pub mod copr;
mod error;
pub mod fixedpoint;
pub mod forward_model;
pub mod io;
pub mod lifted;
pub mod metrics;
#[cfg(test)]
mod test_support;

pub use error::{CoprError, Result};

use nalgebra::DVector;

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;

/// Coefficient vector `a` (pupil samples or basis weights).
pub type CoefficientVector = DVector<C64>;
