//! The lifted matrix `M(U, a, b, y)` in permuted block-diagonal form.
//!
//! With `alpha = U a` and `beta = U b`, pixel `i` contributes the 2x2 block
//!
//! ```text
//! [ y_i + conj(alpha_i) beta_i + conj(beta_i) alpha_i + |beta_i|^2   conj(alpha_i) + conj(beta_i) ]
//! [ alpha_i + beta_i                                                   1                            ]
//! ```
//!
//! Its determinant is `y_i - |alpha_i|^2` for every `b`, so the matrix has
//! rank `n_y` exactly when `y = |U a|^2`. The dense `2 n_y x 2 n_y` matrix is
//! never formed outside of tests.

use std::ops::{Add, Mul, Sub};

use nalgebra::DVector;

use crate::forward_model::{Measurements, PropagationMatrix};
use crate::{CoefficientVector, CoprError, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major 2x2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn new(a00: C64, a01: C64, a10: C64, a11: C64) -> Self {
        Mat2([[a00, a01], [a10, a11]])
    }

    pub fn frob_sqr(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm_sqr()).sum()
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Mat2([
            [a[0][0].conj(), a[1][0].conj()],
            [a[0][1].conj(), a[1][1].conj()],
        ])
    }

    pub fn mul_vec(&self, v: [C64; 2]) -> [C64; 2] {
        let a = &self.0;
        [
            a[0][0] * v[0] + a[0][1] * v[1],
            a[1][0] * v[0] + a[1][1] * v[1],
        ]
    }

    pub fn scale(&self, s: f64) -> Self {
        let a = &self.0;
        Mat2([[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]])
    }

    pub fn is_finite(&self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        Mat2([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }
}

/// `block = u * diag(sigma) * v^H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd2 {
    pub u: Mat2,
    pub sigma: [f64; 2],
    pub v: Mat2,
}

impl Svd2 {
    pub fn reconstruct(&self) -> Mat2 {
        self.with_singular_values(self.sigma)
    }

    fn with_singular_values(&self, s: [f64; 2]) -> Mat2 {
        let (u, v) = (&self.u.0, &self.v.0);
        let e =
            |i: usize, j: usize| u[i][0] * v[j][0].conj() * s[0] + u[i][1] * v[j][1].conj() * s[1];
        Mat2([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }
}

fn unit_phase(z: C64) -> C64 {
    let n = z.norm();
    if n > 0.0 {
        z / n
    } else {
        ONE
    }
}

fn orthogonal(v: [C64; 2]) -> [C64; 2] {
    [-v[1].conj(), v[0].conj()]
}

fn norm2(v: [C64; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

/// Closed-form SVD of a 2x2 complex block.
///
/// The right singular vectors come from the eigenvectors of the Gram matrix
/// `A^H A`; the leading one is scaled so its largest entry is real positive.
/// A zero block returns identity factors.
pub fn svd2x2(a: &Mat2) -> Svd2 {
    let fro2 = a.frob_sqr();
    if !(fro2 > 0.0) {
        return Svd2 {
            u: Mat2::IDENTITY,
            sigma: [0.0, 0.0],
            v: Mat2::IDENTITY,
        };
    }
    let m = &a.0;
    let g00 = m[0][0].norm_sqr() + m[1][0].norm_sqr();
    let g11 = m[0][1].norm_sqr() + m[1][1].norm_sqr();
    let g01 = m[0][0].conj() * m[0][1] + m[1][0].conj() * m[1][1];
    let disc = (0.5 * (g00 - g11)).hypot(g01.norm());
    let lam1 = 0.5 * (g00 + g11) + disc;

    // Two eigenvector candidates for lam1; keep the better-conditioned one.
    let c1 = [g01, C64::new(lam1 - g00, 0.0)];
    let c2 = [C64::new(lam1 - g11, 0.0), g01.conj()];
    let (n1, n2) = (norm2(c1), norm2(c2));
    let mut v1 = if n1.max(n2) <= f64::EPSILON * (g00 + g11) {
        [ONE, ZERO]
    } else if n1 >= n2 {
        [c1[0] / n1, c1[1] / n1]
    } else {
        [c2[0] / n2, c2[1] / n2]
    };
    let pivot = if v1[0].norm() >= v1[1].norm() {
        v1[0]
    } else {
        v1[1]
    };
    let ph = unit_phase(pivot).conj();
    v1 = [v1[0] * ph, v1[1] * ph];
    let v2 = orthogonal(v1);

    let av1 = a.mul_vec(v1);
    let s1 = norm2(av1);
    let u1 = [av1[0] / s1, av1[1] / s1];
    let u2_base = orthogonal(u1);
    let av2 = a.mul_vec(v2);
    let z = u2_base[0].conj() * av2[0] + u2_base[1].conj() * av2[1];
    let s2 = z.norm();
    let zp = unit_phase(z);
    let u2 = [u2_base[0] * zp, u2_base[1] * zp];

    let cols = |p: [C64; 2], q: [C64; 2]| Mat2([[p[0], q[0]], [p[1], q[1]]]);
    if s2 > s1 {
        // Only reachable through rounding when s1 ~ s2.
        let piv = if v2[0].norm() >= v2[1].norm() {
            v2[0]
        } else {
            v2[1]
        };
        let ph = unit_phase(piv).conj();
        let sw = |w: [C64; 2]| [w[0] * ph, w[1] * ph];
        return Svd2 {
            u: cols(sw(u2), u1),
            sigma: [s2, s1],
            v: cols(sw(v2), v1),
        };
    }
    Svd2 {
        u: cols(u1, u2),
        sigma: [s1, s2],
        v: cols(v1, v2),
    }
}

/// Singular value soft-thresholding `U max(S - threshold, 0) V^H`.
pub fn svt(block: &Mat2, threshold: f64) -> Mat2 {
    let s = svd2x2(block);
    s.with_singular_values([
        (s.sigma[0] - threshold).max(0.0),
        (s.sigma[1] - threshold).max(0.0),
    ])
}

/// Block-diagonal 2x2 matrix variable (ADMM primal and dual).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    pub blocks: Vec<Mat2>,
}

impl BlockMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            blocks: vec![Mat2::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn frob(&self) -> f64 {
        self.blocks.iter().map(Mat2::frob_sqr).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.scale(s)).collect(),
        }
    }

    /// Frobenius distance to another block matrix.
    pub fn dist(&self, other: &BlockMatrix) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (*a - *b).frob_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let s = svd2x2(b);
                s.sigma[0] + s.sigma[1]
            })
            .sum()
    }
}

/// `M(U, a, b, y)` stored as `n_y` blocks `[[c, t], [l, 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLifted {
    pub c: Vec<f64>,
    pub t: Vec<C64>,
    pub l: Vec<C64>,
}

impl BlockLifted {
    /// Blocks from precomputed `alpha = U a`, `beta = U b`.
    pub fn from_fields(
        alpha: &DVector<C64>,
        beta: &DVector<C64>,
        y: &DVector<f64>,
    ) -> Result<Self> {
        CoprError::check_len("U b", alpha.len(), beta.len())?;
        CoprError::check_len("measurements", alpha.len(), y.len())?;
        let n = y.len();
        let mut c = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for i in 0..n {
            let (al, be) = (alpha[i], beta[i]);
            let ci = y[i] + al.conj() * be + be.conj() * al + be.norm_sqr();
            debug_assert!(ci.im.abs() <= 1e-12 * (1.0 + ci.re.abs()));
            c.push(ci.re);
            t.push(al.conj() + be.conj());
            l.push(al + be);
        }
        Ok(Self { c, t, l })
    }

    pub fn n_y(&self) -> usize {
        self.c.len()
    }

    pub fn block(&self, i: usize) -> Mat2 {
        Mat2::new(C64::new(self.c[i], 0.0), self.t[i], self.l[i], ONE)
    }

    pub fn to_blocks(&self) -> BlockMatrix {
        BlockMatrix {
            blocks: (0..self.n_y()).map(|i| self.block(i)).collect(),
        }
    }
}

pub fn build_m(
    u: &PropagationMatrix,
    a: &CoefficientVector,
    b: &CoefficientVector,
    y: &Measurements,
) -> Result<BlockLifted> {
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    let alpha = u.apply(a)?;
    let beta = u.apply(b)?;
    BlockLifted::from_fields(&alpha, &beta, &y.y)
}

/// `|det|` of each block, equal to `|y_i - |(U a)_i|^2|`.
pub fn rank_residuals(m: &BlockLifted) -> DVector<f64> {
    DVector::from_fn(m.n_y(), |i, _| {
        (C64::new(m.c[i], 0.0) - m.t[i] * m.l[i]).norm()
    })
}

/// Nuclear norm of a Hermitian block `[[c, t], [conj(t), 1]]`.
pub fn block_nuclear_norm(c: f64, t: C64) -> f64 {
    let t2 = t.norm_sqr();
    (c * c + 2.0 * t2 + 1.0 + 2.0 * (c - t2).abs()).sqrt()
}

/// Sum over blocks; assumes the structural relation `l = conj(t)`.
pub fn nuclear_norm(m: &BlockLifted) -> f64 {
    m.c.iter()
        .zip(&m.t)
        .map(|(&c, &t)| block_nuclear_norm(c, t))
        .sum()
}
