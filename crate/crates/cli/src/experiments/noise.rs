//! Monte-Carlo comparison of COPR and alternating projections under noise.
//!
//! Intensities come from propagating the full mirror field, so the basis
//! model is only approximate even without noise. Quality is the Strehl ratio
//! of the reconstructed phase against the mirror phase over the aperture.

use std::path::Path;

use copr_core::baselines::alternating_projections_until;
use copr_core::copr::{copr, spectral_init};
use copr_core::forward_model::{add_noise, propagate_pupil_field, Measurements, MirrorModel};
use copr_core::metrics::{quantile, snr_db, strehl};
use rand::Rng;
use serde::Serialize;

use super::{aperture_field, random_mirror_phase, run_trials, status, trial_rng, Problem};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, write_rows};

pub const ALGORITHMS: [&str; 2] = ["copr", "alternating-projections"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub config_hash: String,
    pub n_a: usize,
    pub sigma: f64,
    pub algorithm: String,
    pub strehl: f64,
    pub snr_db: f64,
    pub misfit: f64,
    pub iterations: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub config_hash: String,
    pub n_a: usize,
    pub sigma: f64,
    pub algorithm: String,
    pub trials_ok: usize,
    pub strehl_median: f64,
    pub strehl_q10: f64,
    pub strehl_q90: f64,
    pub snr_db_median: f64,
}

#[derive(Debug, Clone, Default)]
pub struct NoiseOutcome {
    pub trials: Vec<TrialRow>,
    pub summary: Vec<SummaryRow>,
}

impl NoiseOutcome {
    pub fn median(&self, n_a: usize, sigma: f64, algorithm: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.n_a == n_a && r.sigma == sigma && r.algorithm == algorithm)
            .map(|r| r.strehl_median)
    }
}

struct Outcome {
    strehl: f64,
    misfit: f64,
    iterations: usize,
}

fn solve_one(
    cfg: &ExperimentConfig,
    problem: &Problem,
    algorithm: &str,
    y: &Measurements,
    sigma: f64,
    phi: &nalgebra::DMatrix<f64>,
) -> CliResult<Outcome> {
    let u = &problem.u;
    let tau = cfg.solver.tau_for(u.n_y(), sigma);
    let (a, misfit, iterations) = if algorithm == "copr" {
        let mut opts = cfg.solver.copr_options(tau);
        opts.lambda = 0.0;
        let r = copr(u, y, &opts)?;
        let last = r.outer_trace.last().map_or(f64::NAN, |o| o.misfit);
        (r.a, last, r.outer_trace.len())
    } else {
        let a0 = spectral_init(u, y)?;
        let (a, trace) = alternating_projections_until(u, y, &a0, cfg.solver.ap_iterations, tau)?;
        let last = trace.last().map_or(f64::NAN, |r| r.misfit);
        (a, last, trace.len())
    };
    let phase = problem.phase(&a)?;
    Ok(Outcome {
        strehl: strehl(phi, &phase, problem.grid.mask())?,
        misfit,
        iterations,
    })
}

/// Every basis size sees the same mirror phases and noise draws.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<NoiseOutcome> {
    ensure_dir(out)?;
    let hash = cfg.hash();
    let mut outcome = NoiseOutcome::default();
    for &k in &cfg.noise.basis_k {
        let problem = Problem::build(&cfg.model, k)?;
        let mirror = MirrorModel::synthetic(&problem.grid, cfg.model.actuators, cfg.model.stroke)?;
        let n_a = problem.u.n_a();
        let per_trial = run_trials(cfg.threads, cfg.trials, |trial| {
            let mut rows = Vec::new();
            let mut rng = trial_rng(cfg.seed, trial as u64);
            let prepared = (|| -> CliResult<_> {
                let phi = random_mirror_phase(&mirror, &mut rng)?;
                let field = aperture_field(&problem.grid, &phi);
                let raw = propagate_pupil_field(
                    &problem.grid,
                    &problem.diversities,
                    &field,
                    problem.crop,
                )?;
                Ok((phi, Measurements::from_raw(raw.map(|v| v.norm_sqr()))?))
            })();
            let noise_seeds: Vec<u64> = cfg.noise.sigmas.iter().map(|_| rng.random()).collect();
            for (s, &sigma) in cfg.noise.sigmas.iter().enumerate() {
                for algorithm in ALGORITHMS {
                    let mut row = TrialRow {
                        trial,
                        seed: cfg.seed,
                        config_hash: hash.clone(),
                        n_a,
                        sigma,
                        algorithm: algorithm.into(),
                        strehl: f64::NAN,
                        snr_db: f64::NAN,
                        misfit: f64::NAN,
                        iterations: 0,
                        status: String::new(),
                    };
                    let (phi, clean) = match &prepared {
                        Ok(p) => p,
                        Err(e) => {
                            row.status = e.to_string();
                            rows.push(row);
                            continue;
                        }
                    };
                    let result = (|| {
                        let y = add_noise(clean, sigma, noise_seeds[s])?;
                        row.snr_db = if sigma > 0.0 {
                            snr_db(&clean.y, &y.y)?
                        } else {
                            f64::NEG_INFINITY
                        };
                        solve_one(cfg, &problem, algorithm, &y, sigma, phi)
                    })();
                    row.status = status(&result);
                    if let Ok(o) = result {
                        row.strehl = o.strehl;
                        row.misfit = o.misfit;
                        row.iterations = o.iterations;
                    }
                    rows.push(row);
                }
            }
            rows
        })?;
        let rows: Vec<TrialRow> = per_trial.into_iter().flatten().collect();
        for &sigma in &cfg.noise.sigmas {
            for algorithm in ALGORITHMS {
                let sel: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.sigma == sigma && r.algorithm == algorithm && r.status == "ok")
                    .collect();
                let st: Vec<f64> = sel.iter().map(|r| r.strehl).collect();
                let snr: Vec<f64> = sel.iter().map(|r| r.snr_db).collect();
                outcome.summary.push(SummaryRow {
                    seed: cfg.seed,
                    config_hash: hash.clone(),
                    n_a,
                    sigma,
                    algorithm: algorithm.into(),
                    trials_ok: sel.len(),
                    strehl_median: quantile(&st, 0.5),
                    strehl_q10: quantile(&st, 0.1),
                    strehl_q90: quantile(&st, 0.9),
                    snr_db_median: quantile(&snr, 0.5),
                });
            }
        }
        log::info!("noise-robustness: n_a {n_a} done");
        outcome.trials.extend(rows);
    }
    write_rows(&out.join("noise_trials.csv"), &outcome.trials)?;
    write_rows(&out.join("noise_summary.csv"), &outcome.summary)?;
    Ok(outcome)
}
