//! Optical forward models: pupil sampling, basis functions, phase diversity,
//! propagation operators and simulated intensity measurements.
//!
//! Phase maps and pupil fields are `m x m` column-major matrices; `vec(.)`
//! is the column-stacking of such a matrix, which is exactly
//! `DMatrix::as_slice`.

mod basis;
mod dft;
mod grid;
mod measurements;
mod mirror;
mod propagation;

pub use basis::{default_spread, make_basis, BasisSet};
pub use dft::CenteredDft;
pub use grid::{make_pupil_grid, PupilGrid};
pub use measurements::{add_noise, intensities, simulate_measurements, Measurements};
pub use mirror::{mirror_phase, MirrorModel};
pub use propagation::{
    build_modal_u, build_zonal_u, propagate_pupil_field, CropWindow, Form, PropagationMatrix,
};

use nalgebra::DMatrix;

use crate::{CoprError, Result};

/// Real `m x m` phase map in radians.
pub type PhaseMap = DMatrix<f64>;

/// Defocus mode `2 rho^2 - 1`, with `rho` normalized to the aperture radius.
pub fn defocus_mode(rho2: f64) -> f64 {
    2.0 * rho2 - 1.0
}

/// Defocus diversity `coeff * (2 rho^2 - 1)` on the aperture, zero outside.
pub fn defocus_phase(grid: &PupilGrid, coeff: f64) -> Result<PhaseMap> {
    if !coeff.is_finite() {
        return Err(CoprError::invalid("defocus coefficient must be finite"));
    }
    let m = grid.m();
    Ok(DMatrix::from_fn(m, m, |r, c| {
        if grid.inside(r, c) {
            coeff * defocus_mode(grid.rho2(r, c))
        } else {
            0.0
        }
    }))
}

/// A set of known phase diversities sharing one pupil grid.
#[derive(Debug, Clone)]
pub struct DiversitySet {
    pub phases: Vec<PhaseMap>,
    /// Defocus coefficient per map (radians); NaN for user-supplied maps.
    pub labels: Vec<f64>,
}

impl DiversitySet {
    pub fn defocus(grid: &PupilGrid, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(CoprError::invalid("at least one diversity is required"));
        }
        let phases = coeffs
            .iter()
            .map(|&c| defocus_phase(grid, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phases,
            labels: coeffs.to_vec(),
        })
    }

    /// `n` defocus coefficients evenly spaced over `[-max_coeff, max_coeff]`.
    pub fn uniform_defocus(grid: &PupilGrid, n: usize, max_coeff: f64) -> Result<Self> {
        let coeffs: Vec<f64> = match n {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..n)
                .map(|i| -max_coeff + 2.0 * max_coeff * i as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::defocus(grid, &coeffs)
    }

    pub fn from_phases(phases: Vec<PhaseMap>) -> Result<Self> {
        if phases.is_empty() {
            return Err(CoprError::invalid("at least one diversity is required"));
        }
        if phases.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(CoprError::invalid("diversity phase maps must be finite"));
        }
        let labels = vec![f64::NAN; phases.len()];
        Ok(Self { phases, labels })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}
