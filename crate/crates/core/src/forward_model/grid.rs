use crate::{CoprError, Result};

/// Square `m x m` sampling of the pupil plane with a circular aperture.
///
/// Pixel centers sit at `-1 + (2k + 1) / m` along each axis, so the grid is
/// symmetric about the origin. Row index runs along `y`, column index along
/// `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PupilGrid {
    m: usize,
    aperture_radius: f64,
    axis: Vec<f64>,
    mask: Vec<bool>,
}

pub fn make_pupil_grid(m: usize, aperture_radius: f64) -> Result<PupilGrid> {
    if m < 2 {
        return Err(CoprError::invalid(format!(
            "grid side must be >= 2, got {m}"
        )));
    }
    if !(aperture_radius > 0.0 && aperture_radius <= 1.0) {
        return Err(CoprError::invalid(format!(
            "aperture radius must lie in (0, 1], got {aperture_radius}"
        )));
    }
    let axis: Vec<f64> = (0..m)
        .map(|k| -1.0 + (2 * k + 1) as f64 / m as f64)
        .collect();
    let r2 = aperture_radius * aperture_radius;
    let mut mask = vec![false; m * m];
    for c in 0..m {
        for r in 0..m {
            mask[r + c * m] = axis[c] * axis[c] + axis[r] * axis[r] <= r2;
        }
    }
    if !mask.iter().any(|&b| b) {
        return Err(CoprError::EmptyMask);
    }
    Ok(PupilGrid {
        m,
        aperture_radius,
        axis,
        mask,
    })
}

impl PupilGrid {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn aperture_radius(&self) -> f64 {
        self.aperture_radius
    }

    /// Cartesian coordinate of a row/column index.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// `(x, y)` of pixel `(row, col)`.
    pub fn coords(&self, row: usize, col: usize) -> (f64, f64) {
        (self.axis[col], self.axis[row])
    }

    pub fn inside(&self, row: usize, col: usize) -> bool {
        self.mask[row + col * self.m]
    }

    /// Column-major aperture support.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Squared radius normalized by the aperture radius.
    pub fn rho2(&self, row: usize, col: usize) -> f64 {
        let (x, y) = self.coords(row, col);
        (x * x + y * y) / (self.aperture_radius * self.aperture_radius)
    }
}
