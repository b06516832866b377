use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::PropagationMatrix;
use crate::{CoefficientVector, CoprError, Result};

/// Normalized intensity measurements.
///
/// `y` holds the raw intensities divided by `scale`, with `scale` chosen so
/// that the noise-free maximum is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub y: DVector<f64>,
    pub scale: f64,
}

impl Measurements {
    /// Normalizes raw intensities so that `max(y) = 1`.
    pub fn from_raw(raw: DVector<f64>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoprError::invalid(
                "intensities must be finite and nonnegative",
            ));
        }
        let scale = raw.max();
        if !(scale > 0.0) {
            return Err(CoprError::ZeroField);
        }
        Ok(Self {
            y: raw / scale,
            scale,
        })
    }

    /// Already-normalized data (e.g. loaded from disk).
    pub fn from_normalized(y: DVector<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(CoprError::invalid("normalization scale must be positive"));
        }
        if y.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CoprError::invalid(
                "intensities must be finite and nonnegative",
            ));
        }
        Ok(Self { y, scale })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Coefficients consistent with the normalized data: `a / sqrt(scale)`.
    pub fn normalize_coefficients(&self, a: &CoefficientVector) -> CoefficientVector {
        a.unscale(self.scale.sqrt())
    }
}

/// `|U a|^2`, unnormalized.
pub fn intensities(u: &PropagationMatrix, a: &CoefficientVector) -> Result<DVector<f64>> {
    Ok(u.apply(a)?.map(|p| p.norm_sqr()))
}

pub fn simulate_measurements(u: &PropagationMatrix, a: &CoefficientVector) -> Result<Measurements> {
    Measurements::from_raw(intensities(u, a)?)
}

/// `max(0, y + eps)` with `eps ~ N(0, sigma^2)` i.i.d., reproducible by seed.
/// The normalization scale is carried over unchanged.
pub fn add_noise(y: &Measurements, sigma: f64, seed: u64) -> Result<Measurements> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CoprError::invalid(format!(
            "noise level must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let noisy = y.y.map(|v| (v + normal.sample(&mut rng)).max(0.0));
    Ok(Measurements {
        y: noisy,
        scale: y.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::{build_zonal_u, make_pupil_grid, DiversitySet};
    use crate::C64;

    fn zonal(m: usize) -> PropagationMatrix {
        let g = make_pupil_grid(m, 0.5).unwrap();
        let d = DiversitySet::defocus(&g, &[0.0]).unwrap();
        build_zonal_u(&g, &d).unwrap()
    }

    #[test]
    fn zero_field_cannot_be_normalized() {
        let u = zonal(4);
        let a = DVector::zeros(16);
        assert!(matches!(
            simulate_measurements(&u, &a),
            Err(CoprError::ZeroField)
        ));
    }

    #[test]
    fn impulse_gives_flat_intensity() {
        let u = zonal(8);
        let mut a = DVector::zeros(64);
        a[9] = C64::new(0.3, -0.4);
        let y = simulate_measurements(&u, &a).unwrap();
        assert!(y.y.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!((y.scale - 0.25 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_range() {
        let u = zonal(6);
        let a = DVector::from_fn(36, |i, _| {
            C64::new((i as f64).sin(), (i as f64 * 0.3).cos())
        });
        let y = simulate_measurements(&u, &a).unwrap();
        assert!((y.y.max() - 1.0).abs() < 1e-15);
        assert!(y.y.min() >= 0.0);
        // Normalized coefficients reproduce normalized data.
        let an = y.normalize_coefficients(&a);
        let yn = intensities(&u, &an).unwrap();
        assert!((yn - &y.y).norm() < 1e-12);
    }

    #[test]
    fn noise_contract() {
        let y = Measurements::from_raw(DVector::from_vec(vec![0.0, 0.2, 0.5, 1.0])).unwrap();
        assert_eq!(add_noise(&y, 0.0, 1).unwrap(), y);
        let a = add_noise(&y, 0.1, 42).unwrap();
        let b = add_noise(&y, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let c = add_noise(&y, 0.1, 43).unwrap();
        assert_ne!(a, c);
        let big = add_noise(&y, 100.0, 7).unwrap();
        assert!(big.y.iter().all(|&v| v >= 0.0));
        assert!(add_noise(&y, -1.0, 0).is_err());
    }
}
