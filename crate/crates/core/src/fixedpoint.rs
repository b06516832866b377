//! Closed-form fixed-point operator for problems with a unitary `U`.
//!
//! For `U = I` the subproblem `argmin_x ||M(I, x, -a, y)||_*` separates into
//! scalar problems, each with an explicit solution. A unitary `U` reduces to
//! that case by conjugation.

use nalgebra::DVector;

use crate::forward_model::{Measurements, PropagationMatrix};
use crate::{CoefficientVector, CoprError, Result, C64};

/// Squared nuclear norm of one 2x2 block of `M(1, x, -a, y)`.
pub fn f_i(x: C64, a: C64, y: f64) -> f64 {
    let r = y - 2.0 * (x * a.conj()).re + a.norm_sqr();
    let s2 = (x - a).norm_sqr();
    r * r + 2.0 * s2 + 1.0 + 2.0 * (r - s2).abs()
}

/// `t^3 + 2(1 - y) t^2 + (y^2 - 6y + 1) t - 4y`.
pub fn cubic_g(t: f64, y: f64) -> f64 {
    ((t + 2.0 * (1.0 - y)) * t + (y * y - 6.0 * y + 1.0)) * t - 4.0 * y
}

fn cubic_dg(t: f64, y: f64) -> f64 {
    (3.0 * t + 4.0 * (1.0 - y)) * t + (y * y - 6.0 * y + 1.0)
}

/// Positive root of [`cubic_g`], the squared switching radius between the
/// two point cases of [`t_scalar`].
///
/// The root lies below `4y`. For `y < 4/3` it also lies above `9y/4`; beyond
/// that `g(9y/4)` turns positive and the search falls back to `(0, 4y)`.
pub fn lambda_root(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(CoprError::invalid(format!(
            "lambda_root needs y > 0, got {y}"
        )));
    }
    let mut hi = 4.0 * y;
    let mut lo = 2.25 * y;
    if cubic_g(lo, y) >= 0.0 {
        lo = 0.0;
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let g = cubic_g(t, y);
        if g == 0.0 {
            return Ok(t);
        }
        if g < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dg = cubic_dg(t, y);
        let newton = t - g / dg;
        let next = if dg != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-15 * t.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Image of one scalar component under the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarImage {
    /// Every `z` with `|z| <= radius` is a minimizer (`a = 0`, `y > 0`).
    Disk {
        radius: f64,
    },
    Point(C64),
}

impl ScalarImage {
    /// Deterministic selection: the disk maps to its center.
    pub fn select(&self) -> C64 {
        match *self {
            ScalarImage::Disk { .. } => C64::new(0.0, 0.0),
            ScalarImage::Point(z) => z,
        }
    }
}

/// Minimizer set of `x -> f_i(x, a, y)`.
pub fn t_scalar(a: C64, y: f64) -> Result<ScalarImage> {
    if !(y >= 0.0) {
        return Err(CoprError::invalid(format!(
            "intensity must be non-negative, got {y}"
        )));
    }
    if y == 0.0 {
        return Ok(ScalarImage::Point(a * 0.5));
    }
    let mag2 = a.norm_sqr();
    if mag2 == 0.0 {
        return Ok(ScalarImage::Disk { radius: y.sqrt() });
    }
    let lambda = lambda_root(y)?;
    if mag2 <= lambda {
        Ok(ScalarImage::Point(a * (y.sqrt() / mag2.sqrt())))
    } else {
        Ok(ScalarImage::Point(
            a * ((y + mag2 + 1.0) / (2.0 * (mag2 + 1.0))),
        ))
    }
}

/// Componentwise operator for `U = I`, with disk cases resolved to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub value: CoefficientVector,
    /// Indices whose image was a disk rather than a point.
    pub set_valued: Vec<usize>,
}

pub fn t_identity(a: &CoefficientVector, y: &Measurements) -> Result<Selection> {
    CoprError::check_len("measurements", a.len(), y.len())?;
    let mut set_valued = Vec::new();
    let mut value = DVector::zeros(a.len());
    for (i, (&ai, &yi)) in a.iter().zip(y.y.iter()).enumerate() {
        let img = t_scalar(ai, yi)?;
        if matches!(img, ScalarImage::Disk { .. }) {
            set_valued.push(i);
        }
        value[i] = img.select();
    }
    Ok(Selection { value, set_valued })
}

/// Largest entry of `|U^H U - I|`, probed column by column.
pub fn unitarity_deviation(u: &PropagationMatrix) -> Result<f64> {
    if u.n_y() != u.n_a() {
        return Ok(f64::INFINITY);
    }
    let n = u.n_a();
    let mut worst: f64 = 0.0;
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = u.apply_adjoint(&u.apply(&e)?)?;
        e[j] = C64::new(0.0, 0.0);
        for (i, v) in col.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).norm());
        }
    }
    Ok(worst)
}

/// Squared distance from `a` to `{x : |U x|^2 = y}` for unitary `U`:
/// `sum_i (|(U a)_i| - sqrt(y_i))^2`.
pub fn solution_set_distance(
    u: &PropagationMatrix,
    a: &CoefficientVector,
    y: &Measurements,
) -> Result<f64> {
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    let ua = u.apply(a)?;
    Ok(ua
        .iter()
        .zip(y.y.iter())
        .map(|(v, y)| (v.norm() - y.max(0.0).sqrt()).powi(2))
        .sum())
}

/// `U^H T(U a)` for unitary `U`.
///
/// Unitarity is checked on every call, which costs `n_a` applications of
/// `U^H U`; use [`t_unitary_unchecked`] inside loops after one check.
pub fn t_unitary(
    a: &CoefficientVector,
    y: &Measurements,
    u: &PropagationMatrix,
) -> Result<Selection> {
    let deviation = unitarity_deviation(u)?;
    if deviation > 1e-10 {
        return Err(CoprError::NotUnitary { deviation });
    }
    t_unitary_unchecked(a, y, u)
}

pub fn t_unitary_unchecked(
    a: &CoefficientVector,
    y: &Measurements,
    u: &PropagationMatrix,
) -> Result<Selection> {
    let inner = t_identity(&u.apply(a)?, y)?;
    Ok(Selection {
        value: u.apply_adjoint(&inner.value)?,
        set_valued: inner.set_valued,
    })
}
