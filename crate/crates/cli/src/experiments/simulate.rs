use std::path::Path;

use copr_core::forward_model::{add_noise, simulate_measurements, MirrorModel};
use copr_core::io::{
    write_container, write_measurements_csv, write_real_grid_csv, Container, ResultJson,
};
use copr_core::metrics::snr_db;
use rand::Rng;
use serde::Serialize;

use super::{aperture_field, random_mirror_phase, run_trials, trial_rng, Problem};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{create, ensure_dir, write_rows};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateRow {
    pub trial: usize,
    pub seed: u64,
    pub config_hash: String,
    pub n_y: usize,
    pub n_a: usize,
    pub sigma: f64,
    /// Noise-to-signal power in dB; `-inf` when noise-free.
    pub snr_db: f64,
    pub scale: f64,
}

/// Draws mirror phases, writes the operator, the (noisy) measurements in
/// binary and CSV form, the true coefficients and phase maps.
///
/// The measurements are generated from the model's own representation of
/// the mirror field, so noise-free data is exactly consistent with `U`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<SimulateRow>> {
    ensure_dir(out)?;
    let problem = Problem::build(&cfg.model, cfg.model.basis_k)?;
    let mirror = MirrorModel::synthetic(&problem.grid, cfg.model.actuators, cfg.model.stroke)?;
    let op_path = out.join("operator.cprb");
    write_container(create(&op_path)?, &Container::from_operator(&problem.u))
        .map_err(|e| CliError::reading(&op_path, e))?;
    let hash = cfg.hash();

    let results = run_trials(cfg.threads, cfg.trials, |trial| -> CliResult<SimulateRow> {
        let mut rng = trial_rng(cfg.seed, trial as u64);
        let phi = random_mirror_phase(&mirror, &mut rng)?;
        let a = problem.coefficients(&aperture_field(&problem.grid, &phi))?;
        let clean = simulate_measurements(&problem.u, &a)?;
        let y = add_noise(&clean, cfg.sigma, rng.random())?;
        let truth = ResultJson {
            a: clean
                .normalize_coefficients(&a)
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
            converged: true,
            stopped: false,
            total_inner: 0,
            outer_trace: vec![],
        };
        let p = |name: &str| out.join(format!("{name}_{trial}"));
        let bin = p("measurements").with_extension("cprb");
        write_container(create(&bin)?, &Container::from_measurements(&y))
            .map_err(|e| CliError::reading(&bin, e))?;
        let csv = p("measurements").with_extension("csv");
        write_measurements_csv(create(&csv)?, &y).map_err(|e| CliError::reading(&csv, e))?;
        let tj = p("truth").with_extension("json");
        serde_json::to_writer_pretty(create(&tj)?, &truth)
            .map_err(|e| CliError::io(&tj, e.into()))?;
        let pm = p("phase").with_extension("csv");
        write_real_grid_csv(create(&pm)?, &phi).map_err(|e| CliError::reading(&pm, e))?;
        Ok(SimulateRow {
            trial,
            seed: cfg.seed,
            config_hash: hash.clone(),
            n_y: problem.u.n_y(),
            n_a: problem.u.n_a(),
            sigma: cfg.sigma,
            snr_db: if cfg.sigma > 0.0 {
                snr_db(&clean.y, &y.y)?
            } else {
                f64::NEG_INFINITY
            },
            scale: y.scale,
        })
    })?;
    let rows = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    write_rows(&out.join("simulate.csv"), &rows)?;
    Ok(rows)
}
