use nalgebra::{DMatrix, DVector};

use super::{BasisSet, CenteredDft, DiversitySet, PupilGrid};
use crate::{CoefficientVector, CoprError, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Zonal,
    Modal,
}

/// Centered square window of `size x size` image-plane pixels.
///
/// Rows/columns `h - size/2 .. h - size/2 + size` with `h = floor(m / 2)`,
/// the zero-frequency pixel of the shifted PSF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub size: usize,
}

impl CropWindow {
    fn start(&self, m: usize) -> usize {
        m / 2 - self.size / 2
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(DMatrix<C64>),
    Zonal {
        pupils: Vec<Vec<C64>>,
        dft: CenteredDft,
    },
}

/// Linear map `U` from coefficients to stacked image-plane fields.
///
/// The modal form is stored densely; the zonal form stays factored as
/// `diag(exp(j phi_d))` followed by a unitary DFT, one block per diversity.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    form: Form,
    repr: Repr,
    n_y: usize,
    n_a: usize,
    n_d: usize,
    crop: Option<CropWindow>,
}

impl PropagationMatrix {
    /// Wraps an explicit matrix (treated as a modal-form operator).
    pub fn from_dense(u: DMatrix<C64>) -> Self {
        Self {
            form: Form::Modal,
            n_y: u.nrows(),
            n_a: u.ncols(),
            n_d: 1,
            crop: None,
            repr: Repr::Dense(u),
        }
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    /// Number of stacked diversity blocks.
    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn crop(&self) -> Option<CropWindow> {
        self.crop
    }

    pub fn dense(&self) -> Option<&DMatrix<C64>> {
        match &self.repr {
            Repr::Dense(u) => Some(u),
            Repr::Zonal { .. } => None,
        }
    }

    /// `U a`.
    pub fn apply(&self, a: &CoefficientVector) -> Result<DVector<C64>> {
        CoprError::check_len("coefficient vector", self.n_a, a.len())?;
        Ok(match &self.repr {
            Repr::Dense(u) => u * a,
            Repr::Zonal { pupils, dft } => {
                let np = self.n_a;
                let mut out = DVector::zeros(self.n_y);
                for (d, p) in pupils.iter().enumerate() {
                    let mut buf: Vec<C64> = p.iter().zip(a.iter()).map(|(p, a)| p * a).collect();
                    dft.forward(&mut buf);
                    out.rows_mut(d * np, np).copy_from_slice(&buf);
                }
                out
            }
        })
    }

    /// `U^H w`.
    pub fn apply_adjoint(&self, w: &DVector<C64>) -> Result<CoefficientVector> {
        CoprError::check_len("image-plane vector", self.n_y, w.len())?;
        Ok(match &self.repr {
            Repr::Dense(u) => u.ad_mul(w),
            Repr::Zonal { pupils, dft } => {
                let np = self.n_a;
                let mut out = DVector::zeros(np);
                for (d, p) in pupils.iter().enumerate() {
                    let mut buf = w.rows(d * np, np).iter().copied().collect::<Vec<_>>();
                    dft.inverse(&mut buf);
                    for (o, (b, p)) in out.iter_mut().zip(buf.iter().zip(p)) {
                        *o += p.conj() * b;
                    }
                }
                out
            }
        })
    }

    /// Explicit `n_y x n_a` matrix (materializes the zonal operator).
    pub fn to_dense(&self) -> DMatrix<C64> {
        match &self.repr {
            Repr::Dense(u) => u.clone(),
            Repr::Zonal { .. } => {
                let mut u = DMatrix::zeros(self.n_y, self.n_a);
                let mut e = DVector::zeros(self.n_a);
                for j in 0..self.n_a {
                    e[j] = C64::new(1.0, 0.0);
                    let col = self.apply(&e).expect("dimension fixed");
                    u.set_column(j, &col);
                    e[j] = C64::new(0.0, 0.0);
                }
                u
            }
        }
    }
}

fn check_grid(grid: &PupilGrid, diversities: &DiversitySet) -> Result<()> {
    if diversities.is_empty() {
        return Err(CoprError::invalid("at least one diversity is required"));
    }
    let m = grid.m();
    for p in &diversities.phases {
        if p.nrows() != m || p.ncols() != m {
            return Err(CoprError::DimensionMismatch {
                what: "diversity phase map side",
                expected: m,
                got: p.nrows(),
            });
        }
    }
    Ok(())
}

fn crop_bounds(m: usize, crop: Option<CropWindow>) -> Result<(usize, usize)> {
    match crop {
        Some(c) if c.size == 0 || c.size > m => Err(CoprError::invalid(format!(
            "crop window {} does not fit a {m}x{m} image",
            c.size
        ))),
        Some(c) => Ok((c.start(m), c.size)),
        None => Ok((0, m)),
    }
}

/// Image-plane field of an arbitrary pupil field under every diversity,
/// cropped and stacked in the same order as the rows of [`build_modal_u`].
pub fn propagate_pupil_field(
    grid: &PupilGrid,
    diversities: &DiversitySet,
    field: &DMatrix<C64>,
    crop: Option<CropWindow>,
) -> Result<DVector<C64>> {
    check_grid(grid, diversities)?;
    let m = grid.m();
    if field.nrows() != m || field.ncols() != m {
        return Err(CoprError::DimensionMismatch {
            what: "pupil field side",
            expected: m,
            got: field.nrows(),
        });
    }
    let (start, w) = crop_bounds(m, crop)?;
    let dft = CenteredDft::new(m);
    let per_image = w * w;
    let mut out = DVector::zeros(diversities.len() * per_image);
    for (d, p) in diversities.phases.iter().enumerate() {
        let mut buf: Vec<C64> = field
            .iter()
            .zip(p.iter())
            .map(|(f, &v)| f * C64::from_polar(1.0, v))
            .collect();
        dft.forward(&mut buf);
        for c in 0..w {
            for r in 0..w {
                out[d * per_image + r + c * w] = buf[(start + r) + (start + c) * m];
            }
        }
    }
    Ok(out)
}

/// Dense modal operator: column `i` stacks, over diversities, the cropped
/// centered DFT of `G_i exp(j phi_d)`.
pub fn build_modal_u(
    basis: &BasisSet,
    diversities: &DiversitySet,
    crop: Option<CropWindow>,
) -> Result<PropagationMatrix> {
    let grid = &basis.grid;
    check_grid(grid, diversities)?;
    let m = grid.m();
    let (start, w) = crop_bounds(m, crop)?;
    let per_image = w * w;
    let n_d = diversities.len();
    let n_a = basis.len();
    let n_y = n_d * per_image;
    let dft = CenteredDft::new(m);
    let phasors: Vec<Vec<C64>> = diversities
        .phases
        .iter()
        .map(|p| p.iter().map(|&v| C64::from_polar(1.0, v)).collect())
        .collect();

    let mut u = DMatrix::zeros(n_y, n_a);
    for (i, g) in basis.stack.iter().enumerate() {
        for (d, ph) in phasors.iter().enumerate() {
            let mut buf: Vec<C64> = g.iter().zip(ph).map(|(&g, p)| p * g).collect();
            dft.forward(&mut buf);
            for c in 0..w {
                for r in 0..w {
                    u[(d * per_image + r + c * w, i)] = buf[(start + r) + (start + c) * m];
                }
            }
        }
    }
    Ok(PropagationMatrix {
        form: Form::Modal,
        repr: Repr::Dense(u),
        n_y,
        n_a,
        n_d,
        crop,
    })
}

/// Factored zonal operator over the full `m x m` pupil (`n_a = m^2`).
pub fn build_zonal_u(grid: &PupilGrid, diversities: &DiversitySet) -> Result<PropagationMatrix> {
    check_grid(grid, diversities)?;
    let m = grid.m();
    let pupils = diversities
        .phases
        .iter()
        .map(|p| p.iter().map(|&v| C64::from_polar(1.0, v)).collect())
        .collect();
    Ok(PropagationMatrix {
        form: Form::Zonal,
        n_y: diversities.len() * m * m,
        n_a: m * m,
        n_d: diversities.len(),
        crop: None,
        repr: Repr::Zonal {
            pupils,
            dft: CenteredDft::new(m),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::{default_spread, make_basis, make_pupil_grid};
    use std::f64::consts::PI;

    fn rand_vec(n: usize, seed: u64) -> DVector<C64> {
        let mut s = seed;
        DVector::from_fn(n, |_, _| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let b = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            C64::new(a, b)
        })
    }

    #[test]
    fn zonal_single_flat_diversity_is_unitary() {
        let g = make_pupil_grid(8, 0.5).unwrap();
        let d = DiversitySet::defocus(&g, &[0.0]).unwrap();
        // zero defocus still applies exp(j * 0) = 1 everywhere: plain DFT.
        let u = build_zonal_u(&g, &d).unwrap();
        for seed in 0..5 {
            let v = rand_vec(64, seed);
            let uv = u.apply(&v).unwrap();
            assert!((uv.norm() / v.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zonal_dimensions_and_adjoint() {
        let g = make_pupil_grid(6, 0.7).unwrap();
        let d = DiversitySet::defocus(&g, &[-PI / 4.0, PI / 4.0]).unwrap();
        let u = build_zonal_u(&g, &d).unwrap();
        assert_eq!(u.n_y(), 2 * 36);
        assert_eq!(u.n_a(), 36);
        let v = rand_vec(36, 3);
        let w = rand_vec(72, 4);
        let lhs = u.apply(&v).unwrap().dotc(&w);
        let rhs = v.dotc(&u.apply_adjoint(&w).unwrap());
        assert!((lhs - rhs).norm() <= 1e-10);
    }

    #[test]
    fn modal_constant_basis_gives_impulse() {
        // G = 1 on the full square: aperture radius 1 does not cover the
        // corners, so use a center far away with tiny spread and a full mask
        // by construction of the stack.
        let g = make_pupil_grid(8, 1.0).unwrap();
        let mut basis = make_basis(&g, 1, 1.0).unwrap();
        basis.stack[0] = DMatrix::from_element(8, 8, 1.0);
        let d = DiversitySet::defocus(&g, &[0.0]).unwrap();
        let u = build_modal_u(&basis, &d, None).unwrap();
        let col = u.dense().unwrap().column(0).clone_owned();
        for (i, v) in col.iter().enumerate() {
            let want = if i == 4 + 4 * 8 { 8.0 } else { 0.0 };
            assert!((v - C64::new(want, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn sparse_demo_dimensions() {
        let g = make_pupil_grid(128, 0.4).unwrap();
        let b = make_basis(&g, 4, default_spread(&g, 4)).unwrap();
        let d = DiversitySet::defocus(&g, &[-PI / 8.0, PI / 8.0]).unwrap();
        let u = build_modal_u(&b, &d, Some(CropWindow { size: 2 })).unwrap();
        assert_eq!((u.n_y(), u.n_a()), (8, 16));
    }

    #[test]
    fn crop_too_large_is_rejected() {
        let g = make_pupil_grid(8, 0.5).unwrap();
        let b = make_basis(&g, 2, 4.0).unwrap();
        let d = DiversitySet::defocus(&g, &[0.0]).unwrap();
        assert!(build_modal_u(&b, &d, Some(CropWindow { size: 9 })).is_err());
        assert!(build_modal_u(&b, &d, Some(CropWindow { size: 0 })).is_err());
    }

    #[test]
    fn modal_columns_reproduce_basis_vectors() {
        let g = make_pupil_grid(16, 0.6).unwrap();
        let b = make_basis(&g, 3, default_spread(&g, 3)).unwrap();
        let d = DiversitySet::defocus(&g, &[-0.5, 0.5]).unwrap();
        let u = build_modal_u(&b, &d, Some(CropWindow { size: 6 })).unwrap();
        let dense = u.to_dense();
        let mut e = DVector::zeros(9);
        e[4] = C64::new(1.0, 0.0);
        let col = u.apply(&e).unwrap();
        assert!((col - dense.column(4)).norm() < 1e-15);
    }

    #[test]
    fn pupil_field_propagation_matches_modal_operator() {
        let g = make_pupil_grid(16, 0.6).unwrap();
        let b = make_basis(&g, 3, default_spread(&g, 3)).unwrap();
        let d = DiversitySet::defocus(&g, &[-0.5, 0.0, 0.5]).unwrap();
        let crop = Some(CropWindow { size: 6 });
        let u = build_modal_u(&b, &d, crop).unwrap();
        let a = DVector::from_fn(9, |k, _| {
            C64::from_polar(0.3 + 0.1 * k as f64, 0.7 * k as f64)
        });
        let mut field = DMatrix::zeros(16, 16);
        for (k, g_k) in b.stack.iter().enumerate() {
            field += g_k.map(|v| C64::new(v, 0.0)) * a[k];
        }
        let direct = propagate_pupil_field(&g, &d, &field, crop).unwrap();
        assert!((direct - u.apply(&a).unwrap()).norm() < 1e-12);
        assert!(propagate_pupil_field(&g, &d, &DMatrix::zeros(8, 8), crop).is_err());
    }
}
