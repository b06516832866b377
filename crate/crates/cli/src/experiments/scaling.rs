//! Wall time of COPR against the number of unknowns at a fixed image crop.

use std::path::Path;
use std::time::Instant;

use copr_core::copr::copr_monitored;
use copr_core::forward_model::{simulate_measurements, MirrorModel};
use copr_core::metrics::piston_align;
use serde::Serialize;

use super::{aperture_field, log_log_slope, random_mirror_phase, trial_rng, Problem};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, write_rows};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub seed: u64,
    pub config_hash: String,
    pub crop: usize,
    pub n_y: usize,
    pub n_a: usize,
    pub outer: usize,
    pub total_inner: usize,
    pub error: f64,
    pub reached: bool,
    pub wall_ms: f64,
    pub per_inner_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub seed: u64,
    pub config_hash: String,
    pub crop: usize,
    /// Least-squares slope of ln(wall time) against ln(n_a).
    pub slope_ms: f64,
    /// The same for the time per inner iteration.
    pub per_inner_slope_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScalingOutcome {
    pub rows: Vec<ScalingRow>,
    pub slopes: Vec<SlopeRow>,
}

/// Runs sequentially so that the timings are not disturbed by other trials.
///
/// Each problem uses the same mirror draw. The truth is the basis fit of the
/// mirror field, so the data is consistent and a run stops as soon as its
/// piston-aligned error reaches the configured tolerance.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<ScalingOutcome> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    let mut outcome = ScalingOutcome::default();
    for &crop in &cfg.scaling.crops {
        let mut points = Vec::new();
        let mut per_inner = Vec::new();
        for &k in &cfg.scaling.basis_k {
            let problem = Problem::build_with_crop(&cfg.model, k, Some(crop))?;
            let mirror =
                MirrorModel::synthetic(&problem.grid, cfg.model.actuators, cfg.model.stroke)?;
            let phi = random_mirror_phase(&mirror, &mut trial_rng(cfg.seed, 0))?;
            let a = problem.coefficients(&aperture_field(&problem.grid, &phi))?;
            let y = simulate_measurements(&problem.u, &a)?;
            let truth = y.normalize_coefficients(&a);
            let tol = cfg.scaling.tolerance;
            let opts = cfg.solver.copr_options(cfg.solver.tau);
            let t0 = Instant::now();
            let res = copr_monitored(&problem.u, &y, &opts, |_, a| {
                piston_align(a, &truth).is_ok_and(|p| p.1 <= tol)
            })?;
            let wall = t0.elapsed().as_secs_f64() * 1e3;
            let error = piston_align(&res.a, &truth)?.1;
            log::info!(
                "scaling: n_a {} crop {crop}: {} outer, error {error:.2e}, {wall:.0} ms",
                problem.u.n_a(),
                res.outer_trace.len()
            );
            let inner = res.total_inner.max(1) as f64;
            points.push((problem.u.n_a() as f64, wall));
            per_inner.push((problem.u.n_a() as f64, wall / inner));
            outcome.rows.push(ScalingRow {
                seed: cfg.seed,
                config_hash: hash.clone(),
                crop,
                n_y: problem.u.n_y(),
                n_a: problem.u.n_a(),
                outer: res.outer_trace.len(),
                total_inner: res.total_inner,
                error,
                reached: error <= tol,
                wall_ms: wall,
                per_inner_ms: wall / inner,
            });
        }
        if points.len() >= 2 {
            outcome.slopes.push(SlopeRow {
                seed: cfg.seed,
                config_hash: hash.clone(),
                crop,
                slope_ms: log_log_slope(&points),
                per_inner_slope_ms: log_log_slope(&per_inner),
            });
        }
    }
    write_rows(&out.join("scaling.csv"), &outcome.rows)?;
    write_rows(&out.join("scaling_fit.csv"), &outcome.slopes)?;
    Ok(outcome)
}
