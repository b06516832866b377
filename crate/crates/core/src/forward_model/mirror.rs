use nalgebra::{DMatrix, DVector};

use super::{PhaseMap, PupilGrid};
use crate::{CoprError, Result};

/// Deformable mirror: `phi = vec^-1(H u)` for actuator inputs `u`.
#[derive(Debug, Clone)]
pub struct MirrorModel {
    /// `m^2 x n_u` influence matrix, columns are vectorized influence maps.
    pub h: DMatrix<f64>,
    pub m: usize,
    pub actuators: Vec<(f64, f64)>,
    pub pitch: f64,
}

impl MirrorModel {
    /// Synthetic mirror with `n_u` Gaussian influence functions.
    ///
    /// Actuators are the `n_u` points of a square lattice (offset by half a
    /// pitch from the origin) nearest the pupil center, with the pitch chosen
    /// so that each actuator covers `pi r^2 / n_u` of aperture area. Each
    /// influence function is `stroke * exp(-(d / w)^2)` with `w = 1.5 pitch`.
    pub fn synthetic(grid: &PupilGrid, n_u: usize, stroke: f64) -> Result<Self> {
        if n_u == 0 {
            return Err(CoprError::invalid("mirror needs at least one actuator"));
        }
        if !stroke.is_finite() {
            return Err(CoprError::invalid("mirror stroke must be finite"));
        }
        let r = grid.aperture_radius();
        let pitch = r * (std::f64::consts::PI / n_u as f64).sqrt();
        let half = (n_u as f64).sqrt().ceil() as i64 + 2;
        let mut sites = Vec::new();
        for i in -half..half {
            for j in -half..half {
                let x = (i as f64 + 0.5) * pitch;
                let y = (j as f64 + 0.5) * pitch;
                sites.push((x, y));
            }
        }
        sites.sort_by(|a, b| {
            let ra = a.0 * a.0 + a.1 * a.1;
            let rb = b.0 * b.0 + b.1 * b.1;
            ra.total_cmp(&rb)
                .then(a.1.atan2(a.0).total_cmp(&b.1.atan2(b.0)))
        });
        sites.truncate(n_u);

        let m = grid.m();
        let width = 1.5 * pitch;
        let mut h = DMatrix::zeros(m * m, n_u);
        for (j, &(ax, ay)) in sites.iter().enumerate() {
            for c in 0..m {
                for row in 0..m {
                    let (x, y) = grid.coords(row, c);
                    let d2 = (x - ax).powi(2) + (y - ay).powi(2);
                    h[(row + c * m, j)] = stroke * (-d2 / (width * width)).exp();
                }
            }
        }
        Ok(Self {
            h,
            m,
            actuators: sites,
            pitch,
        })
    }

    pub fn n_u(&self) -> usize {
        self.h.ncols()
    }
}

pub fn mirror_phase(mirror: &MirrorModel, u: &[f64]) -> Result<PhaseMap> {
    CoprError::check_len("actuator inputs", mirror.n_u(), u.len())?;
    let phi = &mirror.h * DVector::from_column_slice(u);
    Ok(DMatrix::from_column_slice(
        mirror.m,
        mirror.m,
        phi.as_slice(),
    ))
}
