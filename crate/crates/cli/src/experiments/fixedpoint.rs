//! Convergence of the closed-form fixed-point iteration and of COPR on a
//! unitary problem, started near a solution.
//!
//! With unitary `U` every point of `{a : |U a|^2 = y}` is a fixed point, so
//! the iterates settle on some solution rather than on the generating
//! signal. Progress is therefore measured by the distance to the solution
//! set; the error against the generating signal is reported alongside.

use std::path::Path;

use copr_core::copr::{copr_monitored, misfit, CoprOptions, InitialGuess};
use copr_core::fixedpoint::{solution_set_distance, t_unitary, t_unitary_unchecked};
use copr_core::forward_model::simulate_measurements;
use copr_core::metrics::piston_align;
use copr_core::{CoefficientVector, C64};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{trial_rng, Problem};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, write_rows};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub seed: u64,
    pub config_hash: String,
    pub method: String,
    pub k: usize,
    /// `sum_i (|(U a)_i| - sqrt(y_i))^2`.
    pub dist: f64,
    /// `dist_k / dist_{k-1}`; empty at `k = 0` and once the distance is 0.
    pub ratio: Option<f64>,
    /// Piston-aligned squared error against the generating signal.
    pub error: f64,
    pub misfit: f64,
}

fn random_vector(n: usize, rng: &mut impl Rng) -> CoefficientVector {
    DVector::from_fn(n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<DiagnosticRow>> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    let problem = Problem::build(&cfg.model, cfg.model.basis_k)?;
    let u = &problem.u;
    let mut rng = trial_rng(cfg.seed, 0);
    let raw = random_vector(u.n_a(), &mut rng);
    let y = simulate_measurements(u, &raw)?;
    let truth = y.normalize_coefficients(&raw);
    let eps = random_vector(u.n_a(), &mut rng);
    let start = &truth + eps.scale(cfg.fixedpoint.perturbation * truth.norm() / eps.norm());

    let mut rows = Vec::new();
    let mut record =
        |method: &str, k: usize, a: &CoefficientVector, prev: Option<f64>| -> CliResult<f64> {
            let dist = solution_set_distance(u, a, &y)?;
            rows.push(DiagnosticRow {
                seed: cfg.seed,
                config_hash: hash.clone(),
                method: method.into(),
                k,
                dist,
                ratio: prev.filter(|&p| p > 0.0).map(|p| dist / p),
                error: piston_align(a, &truth)?.1,
                misfit: misfit(u, a, &y)?,
            });
            Ok(dist)
        };

    // Validates unitarity once; later steps skip the check.
    let mut a = start.clone();
    let mut prev = record("picard", 0, &a, None)?;
    for k in 1..=cfg.fixedpoint.steps {
        a = if k == 1 {
            t_unitary(&a, &y, u)?.value
        } else {
            t_unitary_unchecked(&a, &y, u)?.value
        };
        prev = record("picard", k, &a, Some(prev))?;
    }

    let opts = CoprOptions {
        initial: InitialGuess::Estimate(start.clone()),
        max_outer: cfg.fixedpoint.steps,
        lambda: 0.0,
        ..cfg.solver.copr_options(cfg.solver.tau)
    };
    let mut prev = record("copr", 0, &start, None)?;
    let mut failure = None;
    copr_monitored(u, &y, &opts, |rec, a| {
        match record("copr", rec.outer, a, Some(prev)) {
            Ok(d) => {
                prev = d;
                false
            }
            Err(e) => {
                failure = Some(e);
                true
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    write_rows(&out.join("fixedpoint_diagnostics.csv"), &rows)?;
    Ok(rows)
}
