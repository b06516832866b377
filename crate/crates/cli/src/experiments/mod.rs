//! Experiment drivers behind the CLI subcommands.

pub mod fixedpoint;
pub mod noise;
pub mod scaling;
pub mod simulate;
pub mod solve;
pub mod sparse;

use copr_core::forward_model::{
    build_modal_u, build_zonal_u, default_spread, make_basis, make_pupil_grid, mirror_phase,
    BasisSet, CropWindow, DiversitySet, MirrorModel, PhaseMap, PropagationMatrix, PupilGrid,
};
use copr_core::{CoefficientVector, C64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ModelConfig, OperatorForm};
use crate::error::{CliError, CliResult};

/// Independent stream for trial `index` of a run seeded with `master`.
pub fn trial_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Runs `f` over `0..n` on `threads` workers (0 = all cores); results come
/// back in index order whatever the completion order.
pub fn run_trials<T, F>(threads: usize, n: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Forward model assembled from a [`ModelConfig`].
pub struct Problem {
    pub grid: PupilGrid,
    pub diversities: DiversitySet,
    /// Present for the modal form.
    pub basis: Option<BasisSet>,
    pub crop: Option<CropWindow>,
    pub u: PropagationMatrix,
}

impl Problem {
    /// Modal problems use `k x k` basis functions; zonal ones ignore `k`.
    pub fn build(model: &ModelConfig, k: usize) -> CliResult<Self> {
        Self::build_with_crop(model, k, model.crop)
    }

    pub fn build_with_crop(model: &ModelConfig, k: usize, crop: Option<usize>) -> CliResult<Self> {
        let grid = make_pupil_grid(model.m, model.aperture)?;
        let diversities = match &model.defocus {
            Some(c) => DiversitySet::defocus(&grid, c)?,
            None => DiversitySet::uniform_defocus(&grid, model.diversities, model.max_defocus)?,
        };
        match model.form {
            OperatorForm::Zonal => {
                let u = build_zonal_u(&grid, &diversities)?;
                Ok(Self {
                    grid,
                    diversities,
                    basis: None,
                    crop: None,
                    u,
                })
            }
            OperatorForm::Modal => {
                let spread = model.spread.unwrap_or_else(|| default_spread(&grid, k));
                let basis = make_basis(&grid, k, spread)?;
                let crop = crop.map(|size| CropWindow { size });
                let u = build_modal_u(&basis, &diversities, crop)?;
                Ok(Self {
                    grid,
                    diversities,
                    basis: Some(basis),
                    crop,
                    u,
                })
            }
        }
    }

    /// Coefficients that represent a pupil field in this model.
    pub fn coefficients(&self, field: &DMatrix<C64>) -> CliResult<CoefficientVector> {
        match &self.basis {
            Some(b) => Ok(b.fit(field)?),
            None => Ok(DVector::from_column_slice(field.as_slice())),
        }
    }

    /// Phase map of the pupil field described by `a`, zero off the aperture.
    pub fn phase(&self, a: &CoefficientVector) -> CliResult<PhaseMap> {
        match &self.basis {
            Some(b) => Ok(copr_core::metrics::phase_from_coeffs(b, a)?),
            None => {
                let m = self.grid.m();
                let mask = self.grid.mask();
                Ok(DMatrix::from_fn(m, m, |r, c| {
                    if mask[r + c * m] {
                        a[r + c * m].arg()
                    } else {
                        0.0
                    }
                }))
            }
        }
    }
}

/// Mirror phase for actuator inputs drawn from `U(0, 1)`.
pub fn random_mirror_phase(mirror: &MirrorModel, rng: &mut ChaCha8Rng) -> CliResult<PhaseMap> {
    let inputs: Vec<f64> = (0..mirror.n_u()).map(|_| rng.random::<f64>()).collect();
    Ok(mirror_phase(mirror, &inputs)?)
}

/// `chi exp(j phi)` on the grid.
pub fn aperture_field(grid: &PupilGrid, phi: &PhaseMap) -> DMatrix<C64> {
    DMatrix::from_fn(grid.m(), grid.m(), |r, c| {
        if grid.inside(r, c) {
            C64::from_polar(1.0, phi[(r, c)])
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Short description of a per-trial failure for the status column.
pub fn status<T>(r: &CliResult<T>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(e) => e.to_string(),
    }
}
