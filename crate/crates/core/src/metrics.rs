//! Reconstruction quality metrics.

use nalgebra::{DMatrix, DVector};

use crate::forward_model::{BasisSet, PhaseMap};
use crate::{CoefficientVector, CoprError, Result, C64};

/// Optimal global phase `c` (|c| = 1) and the aligned error
/// `min_c ||c a_hat - a_star||_2^2`.
///
/// The minimizer is `c = exp(j arg(a_hat^H a_star))`; when the inner product
/// vanishes any phase is optimal and `c = 1` is returned.
pub fn piston_align(a_hat: &CoefficientVector, a_star: &CoefficientVector) -> Result<(C64, f64)> {
    CoprError::check_len("reference coefficients", a_hat.len(), a_star.len())?;
    if a_hat.iter().all(|v| v.norm() == 0.0) {
        return Err(CoprError::UndefinedAlignment);
    }
    let ip = a_hat.dotc(a_star);
    let c = if ip.norm() > 0.0 {
        ip / ip.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let err = (a_hat * c - a_star).norm_squared();
    Ok((c, err))
}

/// `10 log10(||noisy - clean||^2 / ||clean||^2)`.
///
/// This is a noise-to-signal power ratio: larger noise gives larger values.
/// Identical inputs give `-inf`.
pub fn snr_db(clean: &DVector<f64>, noisy: &DVector<f64>) -> Result<f64> {
    CoprError::check_len("noisy measurements", clean.len(), noisy.len())?;
    let signal = clean.norm_squared();
    if !(signal > 0.0) {
        return Err(CoprError::invalid("clean signal is zero"));
    }
    let noise = (noisy - clean).norm_squared();
    if noise == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (noise / signal).log10())
}

/// Mahajan approximation `exp(-delta^2)`, `delta` the RMS of the residual
/// phase over the aperture after removing its mean.
///
/// The residual is formed from phasors so that 2 pi wraps in either argument
/// do not count as error: the piston is the argument of the mean residual
/// phasor, the wrapped residual is taken about it, and its mean is then
/// subtracted. For residuals spanning less than 2 pi this equals the plain
/// de-pistoned difference.
pub fn strehl(phi_true: &PhaseMap, phi_hat: &PhaseMap, mask: &[bool]) -> Result<f64> {
    if phi_true.shape() != phi_hat.shape() {
        return Err(CoprError::DimensionMismatch {
            what: "phase map",
            expected: phi_true.len(),
            got: phi_hat.len(),
        });
    }
    CoprError::check_len("mask", phi_true.len(), mask.len())?;
    let diff: Vec<f64> = phi_true
        .iter()
        .zip(phi_hat.iter())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((t, h), _)| t - h)
        .collect();
    if diff.is_empty() {
        return Err(CoprError::EmptyMask);
    }
    let mean_phasor: C64 = diff.iter().map(|&d| C64::from_polar(1.0, d)).sum();
    let piston = mean_phasor.arg();
    let wrapped: Vec<f64> = diff
        .iter()
        .map(|&d| (C64::from_polar(1.0, d - piston)).arg())
        .collect();
    let n = wrapped.len() as f64;
    let mean = wrapped.iter().sum::<f64>() / n;
    let var = wrapped.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    Ok((-var).exp().clamp(0.0, 1.0))
}

/// Phase of the reconstructed pupil field `sum_i a_i G_i` on the aperture,
/// zero elsewhere.
pub fn phase_from_coeffs(basis: &BasisSet, a: &CoefficientVector) -> Result<PhaseMap> {
    let field = pupil_field(basis, a)?;
    let mask = basis.grid.mask();
    if !field.iter().zip(mask).any(|(f, &m)| m && f.norm() > 0.0) {
        return Err(CoprError::DegenerateField);
    }
    let m = basis.grid.m();
    Ok(DMatrix::from_fn(m, m, |r, c| {
        if mask[r + c * m] {
            field[(r, c)].arg()
        } else {
            0.0
        }
    }))
}

/// `sum_i a_i G_i` on the pupil grid.
pub fn pupil_field(basis: &BasisSet, a: &CoefficientVector) -> Result<DMatrix<C64>> {
    CoprError::check_len("coefficients", basis.len(), a.len())?;
    let m = basis.grid.m();
    let mut field = DMatrix::<C64>::zeros(m, m);
    for (g, &ai) in basis.stack.iter().zip(a.iter()) {
        field.zip_apply(g, |f, g| *f += ai * g);
    }
    Ok(field)
}

/// Nearest-rank quantile of unsorted data; `q` in `[0, 1]`.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::{make_basis, make_pupil_grid};

    fn vecc(v: &[(f64, f64)]) -> CoefficientVector {
        DVector::from_iterator(v.len(), v.iter().map(|&(r, i)| C64::new(r, i)))
    }

    #[test]
    fn alignment_removes_global_phase() {
        let a = vecc(&[(1.0, 0.5), (-0.3, 2.0), (0.0, -1.0)]);
        for th in [0.3, 1.7, -2.9] {
            let rotated = &a * C64::from_polar(1.0, th);
            let (c, err) = piston_align(&rotated, &a).unwrap();
            assert!(err <= 1e-12);
            assert!((c - C64::from_polar(1.0, -th)).norm() < 1e-12);
        }
        let (c, err) = piston_align(&a, &a).unwrap();
        assert!((c - C64::new(1.0, 0.0)).norm() < 1e-15 && err == 0.0);
        assert!(matches!(
            piston_align(&DVector::zeros(3), &a),
            Err(CoprError::UndefinedAlignment)
        ));
    }

    #[test]
    fn alignment_agrees_with_qr_route() {
        let a = vecc(&[(1.0, 0.5), (-0.3, 2.0), (0.7, -1.0), (0.2, 0.2)]);
        let b = vecc(&[(0.1, -0.5), (0.9, 1.0), (-0.7, 0.3), (1.2, 0.0)]);
        let mut m = DMatrix::<C64>::zeros(4, 2);
        m.set_column(0, &a);
        m.set_column(1, &b);
        let r = m.qr().r();
        let from_qr = (r[(0, 1)] / r[(0, 0)]).arg();
        let (c, _) = piston_align(&a, &b).unwrap();
        let d = (c.arg() - from_qr).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-10);
    }

    #[test]
    fn snr_values() {
        let clean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(snr_db(&clean, &clean).unwrap(), f64::NEG_INFINITY);
        assert!(snr_db(&clean, &(&clean * 2.0)).unwrap().abs() < 1e-12);
        // noise power 1% of the signal power
        let s = clean.norm();
        let mut noisy = clean.clone();
        noisy[0] += 0.1 * s;
        assert!((snr_db(&clean, &noisy).unwrap() + 20.0).abs() < 1e-10);
        assert!(snr_db(&DVector::zeros(3), &clean).is_err());
    }

    #[test]
    fn strehl_values() {
        let g = make_pupil_grid(16, 0.8).unwrap();
        let phi = DMatrix::from_fn(16, 16, |r, c| 0.1 * r as f64 - 0.05 * c as f64);
        assert_eq!(strehl(&phi, &phi, g.mask()).unwrap(), 1.0);
        let shifted = phi.add_scalar(2.5);
        assert!((strehl(&phi, &shifted, g.mask()).unwrap() - 1.0).abs() < 1e-14);
        // +-0.1 alternating residual: mean 0 (even count), RMS 0.1.
        let mask = vec![true; 4];
        let t = DMatrix::from_vec(2, 2, vec![0.1, -0.1, 0.1, -0.1]);
        let z = DMatrix::zeros(2, 2);
        assert!((strehl(&t, &z, &mask).unwrap() - (-0.01f64).exp()).abs() < 1e-14);
        // A 2 pi wrap is not an error.
        let wrapped = phi.map(|v| v + 2.0 * std::f64::consts::PI);
        assert!((strehl(&phi, &wrapped, g.mask()).unwrap() - 1.0).abs() < 1e-12);
        assert!(strehl(&phi, &phi, &vec![false; 256]).is_err());
    }

    #[test]
    fn phase_from_coefficients() {
        let g = make_pupil_grid(16, 0.8).unwrap();
        let b = make_basis(&g, 1, 2.0).unwrap();
        let a = vecc(&[(0.7, 0.0)]);
        let p = phase_from_coeffs(&b, &a).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        let b3 = make_basis(&g, 3, 5.0).unwrap();
        let a3 = vecc(&[
            (1.0, 0.2),
            (0.5, -0.4),
            (0.1, 0.9),
            (1.0, 0.0),
            (0.3, 0.3),
            (-0.2, 0.5),
            (0.8, 0.1),
            (0.0, -1.0),
            (0.4, 0.4),
        ]);
        let p0 = phase_from_coeffs(&b3, &a3).unwrap();
        let th = 0.8;
        let p1 = phase_from_coeffs(&b3, &(&a3 * C64::from_polar(1.0, th))).unwrap();
        for (i, (&x, &y)) in p0.iter().zip(p1.iter()).enumerate() {
            if g.mask()[i] {
                let d = (y - x - th).rem_euclid(2.0 * std::f64::consts::PI);
                assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-12);
            }
        }
        assert!(matches!(
            phase_from_coeffs(&b, &vecc(&[(0.0, 0.0)])),
            Err(CoprError::DegenerateField)
        ));
    }

    #[test]
    fn nearest_rank_quantile() {
        let d: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        assert_eq!(quantile(&d, 0.1), 0.1);
        assert_eq!(quantile(&d, 0.9), 0.9);
        assert_eq!(quantile(&d, 0.0), 0.1);
        assert_eq!(quantile(&d, 1.0), 1.0);
    }
}
