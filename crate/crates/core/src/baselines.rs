//! Alternating projections (Gerchberg-Saxton / error reduction) between the
//! measured magnitudes and the range of `U`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::forward_model::{Form, Measurements, PropagationMatrix};
use crate::{CoefficientVector, CoprError, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApRecord {
    pub iter: usize,
    /// `||y - |U a|^2||_1` after the iteration.
    pub misfit: f64,
}

/// Replace magnitudes with `sqrt(y)` and keep phases; zero entries get phase 0.
pub fn magnitude_projection(z: &DVector<C64>, y: &Measurements) -> Result<DVector<C64>> {
    CoprError::check_len("measurements", z.len(), y.len())?;
    Ok(z.zip_map(&y.y, |z, y| {
        let m = y.max(0.0).sqrt();
        let r = z.norm();
        if r > 0.0 {
            z * (m / r)
        } else {
            C64::new(m, 0.0)
        }
    }))
}

/// Least-squares map from image space back to coefficients, `(U^H U)^-1 U^H`.
#[derive(Debug, Clone)]
pub struct RangeProjector {
    chol: Option<Cholesky<C64, Dyn>>,
    scale: f64,
}

impl RangeProjector {
    pub fn new(u: &PropagationMatrix) -> Result<Self> {
        if u.form() == Form::Zonal {
            // Each diversity contributes a unitary block.
            return Ok(Self {
                chol: None,
                scale: 1.0 / u.n_d() as f64,
            });
        }
        let ud = u.dense().expect("modal operators are dense");
        let gram: DMatrix<C64> = ud.ad_mul(ud);
        let chol = Cholesky::new(gram).ok_or(CoprError::RankDeficient {
            condition: f64::INFINITY,
        })?;
        Ok(Self {
            chol: Some(chol),
            scale: 1.0,
        })
    }

    pub fn apply(&self, u: &PropagationMatrix, p: &DVector<C64>) -> Result<CoefficientVector> {
        let rhs = u.apply_adjoint(p)?;
        Ok(match &self.chol {
            Some(c) => c.solve(&rhs),
            None => rhs.scale(self.scale),
        })
    }
}

/// `iters` rounds of `a <- P_range(P_mag(U a))` from `a0`.
pub fn alternating_projections(
    u: &PropagationMatrix,
    y: &Measurements,
    a0: &CoefficientVector,
    iters: usize,
) -> Result<(CoefficientVector, Vec<ApRecord>)> {
    alternating_projections_until(u, y, a0, iters, 0.0)
}

/// [`alternating_projections`] that also stops once the misfit is at most `tol`.
pub fn alternating_projections_until(
    u: &PropagationMatrix,
    y: &Measurements,
    a0: &CoefficientVector,
    iters: usize,
    tol: f64,
) -> Result<(CoefficientVector, Vec<ApRecord>)> {
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    CoprError::check_len("initial estimate", u.n_a(), a0.len())?;
    if iters == 0 {
        return Err(CoprError::invalid(
            "alternating projections needs at least one iteration",
        ));
    }
    let proj = RangeProjector::new(u)?;
    let mut a = a0.clone();
    let mut trace = Vec::with_capacity(iters);
    for iter in 1..=iters {
        let p = magnitude_projection(&u.apply(&a)?, y)?;
        a = proj.apply(u, &p)?;
        let misfit = u
            .apply(&a)?
            .iter()
            .zip(y.y.iter())
            .map(|(v, y)| (y - v.norm_sqr()).abs())
            .sum();
        trace.push(ApRecord { iter, misfit });
        if misfit <= tol {
            break;
        }
    }
    Ok((a, trace))
}
