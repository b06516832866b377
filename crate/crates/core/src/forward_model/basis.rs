use nalgebra::{DMatrix, DVector};

use super::PupilGrid;
use crate::{CoefficientVector, CoprError, Result, C64};

/// Gaussian radial basis functions clipped to the aperture,
/// `G_i(x, y) = chi(x, y) exp(-lambda_i ((x - x_i)^2 + (y - y_i)^2))`.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub centers: Vec<(f64, f64)>,
    pub spread: Vec<f64>,
    pub grid: PupilGrid,
    /// One real `m x m` map per basis function.
    pub stack: Vec<DMatrix<f64>>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    /// Basis functions at arbitrary centers.
    pub fn with_centers(grid: &PupilGrid, centers: Vec<(f64, f64)>, spread: f64) -> Result<Self> {
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(CoprError::invalid(format!(
                "spread must be positive, got {spread}"
            )));
        }
        if centers.is_empty() {
            return Err(CoprError::invalid("basis needs at least one center"));
        }
        let m = grid.m();
        let stack = centers
            .iter()
            .map(|&(cx, cy)| {
                DMatrix::from_fn(m, m, |r, c| {
                    if grid.inside(r, c) {
                        let (x, y) = grid.coords(r, c);
                        (-spread * ((x - cx).powi(2) + (y - cy).powi(2))).exp()
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Ok(Self {
            spread: vec![spread; centers.len()],
            centers,
            grid: grid.clone(),
            stack,
        })
    }
}

/// Spread for a `k x k` layout such that two neighbouring functions both
/// take the value 0.5 halfway between their centers.
impl BasisSet {
    /// Least-squares coefficients of a pupil field: `argmin_a ||sum_i a_i G_i - field||_F`.
    pub fn fit(&self, field: &DMatrix<C64>) -> Result<CoefficientVector> {
        let m = self.grid.m();
        if field.shape() != (m, m) {
            return Err(CoprError::DimensionMismatch {
                what: "pupil field side",
                expected: m,
                got: field.nrows(),
            });
        }
        let n = self.len();
        let gram = DMatrix::from_fn(n, n, |i, j| self.stack[i].dot(&self.stack[j]));
        let rhs = DVector::from_fn(n, |i, _| {
            self.stack[i]
                .iter()
                .zip(field.iter())
                .map(|(&g, &f)| f * g)
                .sum::<C64>()
        });
        let chol = gram.cholesky().ok_or(CoprError::RankDeficient {
            condition: f64::INFINITY,
        })?;
        let re = chol.solve(&rhs.map(|z| z.re));
        let im = chol.solve(&rhs.map(|z| z.im));
        Ok(re.zip_map(&im, C64::new))
    }
}

pub fn default_spread(grid: &PupilGrid, k: usize) -> f64 {
    let pitch = 2.0 * grid.aperture_radius() / k.max(1) as f64;
    4.0 * std::f64::consts::LN_2 / (pitch * pitch)
}

/// `k x k` basis functions with cell-centered centers over the aperture's
/// bounding box. Index `i = row + col * k`, rows along `y`.
pub fn make_basis(grid: &PupilGrid, k: usize, spread: f64) -> Result<BasisSet> {
    if k == 0 {
        return Err(CoprError::invalid("basis layout needs k >= 1"));
    }
    let r = grid.aperture_radius();
    let pos = |l: usize| -r + r * (2 * l + 1) as f64 / k as f64;
    let mut centers = Vec::with_capacity(k * k);
    for col in 0..k {
        for row in 0..k {
            centers.push((pos(col), pos(row)));
        }
    }
    BasisSet::with_centers(grid, centers, spread)
}
