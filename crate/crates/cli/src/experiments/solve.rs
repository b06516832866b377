use std::fs;
use std::path::Path;

use copr_core::baselines::alternating_projections_until;
use copr_core::copr::{copr, misfit, spectral_init, CoprResult};
use copr_core::forward_model::{Measurements, PropagationMatrix};
use copr_core::io::{
    parse_container, read_measurements_csv, write_ap_trace_csv, write_real_grid_csv,
    write_result_json, ContainerTag, ResultJson, MAGIC,
};
use copr_core::metrics::piston_align;
use copr_core::CoefficientVector;
use serde::Serialize;

use super::Problem;
use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{create, ensure_dir, write_rows};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRow {
    pub outer: usize,
    pub misfit: f64,
    pub nuclear_norm: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub seed: u64,
    pub config_hash: String,
    pub algorithm: String,
    pub n_y: usize,
    pub n_a: usize,
    pub misfit: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Piston-aligned squared error against the supplied truth, if any.
    pub error: Option<f64>,
}

pub struct SolveInputs<'a> {
    pub measurements: &'a Path,
    pub operator: Option<&'a Path>,
    pub truth: Option<&'a Path>,
}

/// Reads measurements from a binary container (detected by its magic) or an
/// `i,y` CSV file.
pub fn read_measurements(path: &Path) -> CliResult<Measurements> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        let c = parse_container(&bytes).map_err(|e| CliError::reading(path, e))?;
        if c.tag != ContainerTag::Measurements {
            return Err(CliError::Input {
                path: path.into(),
                message: format!("expected measurements, found {:?}", c.tag),
            });
        }
        c.to_measurements().map_err(|e| CliError::reading(path, e))
    } else {
        read_measurements_csv(bytes.as_slice(), 1.0).map_err(|e| CliError::reading(path, e))
    }
}

pub fn read_operator(path: &Path) -> CliResult<PropagationMatrix> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let c = parse_container(&bytes).map_err(|e| CliError::reading(path, e))?;
    match c.tag {
        ContainerTag::ModalOperator | ContainerTag::ZonalOperator => Ok(c.to_operator()),
        other => Err(CliError::Input {
            path: path.into(),
            message: format!("expected an operator, found {other:?}"),
        }),
    }
}

pub fn read_truth(path: &Path) -> CliResult<CoefficientVector> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let r: ResultJson = serde_json::from_slice(&text).map_err(|e| CliError::Input {
        path: path.into(),
        message: format!("line {}: {e}", e.line()),
    })?;
    Ok(r.coefficients())
}

/// Runs the configured algorithm and writes `result.json`, `phase.csv`
/// and `trace.csv` into `out`.
pub fn run(cfg: &ExperimentConfig, inputs: &SolveInputs, out: &Path) -> CliResult<SolveSummary> {
    let algorithm = cfg.algorithm()?;
    let y = read_measurements(inputs.measurements)?;
    let problem = Problem::build(&cfg.model, cfg.model.basis_k)?;
    let u = match inputs.operator {
        Some(p) => read_operator(p)?,
        None => problem.u.clone(),
    };
    if u.n_y() != y.len() {
        return Err(CliError::Input {
            path: inputs.measurements.into(),
            message: format!(
                "{} measurements for an operator with {} rows",
                y.len(),
                u.n_y()
            ),
        });
    }
    let truth = inputs.truth.map(read_truth).transpose()?;
    ensure_dir(out)?;
    let tau = cfg.solver.tau_for(u.n_y(), cfg.sigma);

    let (a, converged, iterations) = match algorithm {
        Algorithm::Copr | Algorithm::CoprL1 => {
            let mut opts = cfg.solver.copr_options(tau);
            if algorithm == Algorithm::Copr {
                opts.lambda = 0.0;
            }
            let res: CoprResult = copr(&u, &y, &opts)?;
            let path = out.join("result.json");
            write_result_json(create(&path)?, &res).map_err(|e| CliError::reading(&path, e))?;
            let rows: Vec<OuterRow> = res
                .outer_trace
                .iter()
                .map(|r| OuterRow {
                    outer: r.outer,
                    misfit: r.misfit,
                    nuclear_norm: r.nuclear_norm,
                    inner_iterations: r.inner_iterations,
                    inner_converged: r.inner_converged,
                })
                .collect();
            write_rows(&out.join("trace.csv"), &rows)?;
            (res.a, res.converged, res.outer_trace.len())
        }
        Algorithm::AlternatingProjections => {
            let a0 = spectral_init(&u, &y)?;
            let (a, trace) =
                alternating_projections_until(&u, &y, &a0, cfg.solver.ap_iterations, tau)?;
            let converged = trace.last().is_some_and(|r| r.misfit <= tau);
            let path = out.join("trace.csv");
            write_ap_trace_csv(create(&path)?, &trace, u.n_y())
                .map_err(|e| CliError::reading(&path, e))?;
            let res = ResultJson {
                a: a.iter().map(|z| [z.re, z.im]).collect(),
                converged,
                stopped: false,
                total_inner: 0,
                outer_trace: vec![],
            };
            let path = out.join("result.json");
            serde_json::to_writer_pretty(create(&path)?, &res)
                .map_err(|e| CliError::io(&path, e.into()))?;
            (a, converged, trace.len())
        }
    };

    if u.n_a() == problem.u.n_a() {
        let phase = problem.phase(&a)?;
        let path = out.join("phase.csv");
        write_real_grid_csv(create(&path)?, &phase).map_err(|e| CliError::reading(&path, e))?;
    }
    let error = match truth {
        Some(t) => Some(piston_align(&a, &t)?.1),
        None => None,
    };
    let summary = SolveSummary {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        algorithm: algorithm.name().into(),
        n_y: u.n_y(),
        n_a: u.n_a(),
        misfit: misfit(&u, &a, &y)?,
        converged,
        iterations,
        error,
    };
    write_rows(&out.join("solve.csv"), std::slice::from_ref(&summary))?;
    Ok(summary)
}
