//! Outer fixed-point loop: repeatedly minimize `||M(U, a, b, y)||_*` over
//! `a` and set `b <- -a`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::admm::{nn_admm, AdmmOptions};
use crate::forward_model::{Measurements, PropagationMatrix};
use crate::{CoefficientVector, CoprError, Result, C64};

/// Starting point of the outer loop, given as the estimate `a0 = -b0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    /// `b0 = 0`. The inner solver cannot leave `a = 0` from this start, so
    /// the loop stalls at the origin; kept for completeness.
    Zero,
    /// Leading eigenvector of `U^H diag(y) U`, scaled to the measured energy.
    #[default]
    Spectral,
    /// Explicit estimate `a0`.
    Estimate(CoefficientVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoprOptions {
    /// Outer stopping threshold on `||y - |U a|^2||_1`.
    pub tau: f64,
    pub max_outer: usize,
    pub inner: AdmmOptions,
    /// l1 weight; 0 disables the regularizer.
    pub lambda: f64,
    pub initial: InitialGuess,
    /// Inner tolerance `max(1e-8, 0.1 * misfit)` instead of `inner.tol`.
    /// Off by default: the nuclear-norm change of the warm-started ADMM drops
    /// below this threshold within a couple of iterations, long before the
    /// subproblem is solved, and the outer loop then crawls.
    pub adaptive_inner_tol: bool,
}

impl Default for CoprOptions {
    fn default() -> Self {
        Self {
            tau: 1e-8,
            max_outer: 100,
            inner: AdmmOptions::default(),
            lambda: 0.0,
            initial: InitialGuess::Spectral,
            adaptive_inner_tol: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    /// `||y - |U a|^2||_1` after this iteration.
    pub misfit: f64,
    /// Final `||M(U, a_+, b, y)||_*` of the inner solve.
    pub nuclear_norm: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoprResult {
    pub a: CoefficientVector,
    pub outer_trace: Vec<OuterRecord>,
    /// Misfit reached `tau`.
    pub converged: bool,
    /// The monitor callback ended the loop.
    pub stopped: bool,
    pub total_inner: usize,
}

/// `||y - |U a|^2||_1`.
pub fn misfit(u: &PropagationMatrix, a: &CoefficientVector, y: &Measurements) -> Result<f64> {
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    let p = u.apply(a)?;
    Ok(p.iter()
        .zip(y.y.iter())
        .map(|(p, y)| (y - p.norm_sqr()).abs())
        .sum())
}

/// Spectral estimate: power iteration on `U^H diag(y) U` from a fixed start,
/// scaled so that `||U a||^2 = sum(y)`.
pub fn spectral_init(u: &PropagationMatrix, y: &Measurements) -> Result<CoefficientVector> {
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    let n = u.n_a();
    let mut v: CoefficientVector =
        DVector::from_fn(n, |k, _| C64::new(1.0, 0.01 * k as f64) / (n as f64).sqrt());
    v.unscale_mut(v.norm());
    for _ in 0..1000 {
        let mut w = u.apply(&v)?;
        w.iter_mut().zip(y.y.iter()).for_each(|(w, &y)| *w *= y);
        let mut next = u.apply_adjoint(&w)?;
        let nrm = next.norm();
        if !(nrm > 0.0) {
            return Err(CoprError::ZeroField);
        }
        next.unscale_mut(nrm);
        // Fix the global phase before comparing iterates.
        let ip = next.dotc(&v);
        if ip.norm() > 0.0 {
            next *= ip / ip.norm();
        }
        let delta = (&next - &v).norm();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    let energy = u.apply(&v)?.norm_squared();
    if !(energy > 0.0) {
        return Err(CoprError::ZeroField);
    }
    Ok(v.scale((y.y.sum() / energy).sqrt()))
}

fn initial_estimate(
    u: &PropagationMatrix,
    y: &Measurements,
    init: &InitialGuess,
) -> Result<CoefficientVector> {
    match init {
        InitialGuess::Zero => Ok(DVector::zeros(u.n_a())),
        InitialGuess::Spectral => spectral_init(u, y),
        InitialGuess::Estimate(a) => {
            CoprError::check_len("initial estimate", u.n_a(), a.len())?;
            Ok(a.clone())
        }
    }
}

pub fn copr(u: &PropagationMatrix, y: &Measurements, opts: &CoprOptions) -> Result<CoprResult> {
    copr_monitored(u, y, opts, |_, _| false)
}

/// [`copr`] with a callback after every outer iteration; returning `true`
/// stops the loop (e.g. once an error against a known reference is met).
pub fn copr_monitored<F>(
    u: &PropagationMatrix,
    y: &Measurements,
    opts: &CoprOptions,
    mut stop: F,
) -> Result<CoprResult>
where
    F: FnMut(&OuterRecord, &CoefficientVector) -> bool,
{
    if !(opts.tau > 0.0) {
        return Err(CoprError::invalid("outer tolerance must be positive"));
    }
    if opts.max_outer == 0 {
        return Err(CoprError::invalid("max_outer must be >= 1"));
    }
    let mut current = initial_estimate(u, y, &opts.initial)?;
    let mut inner = opts.inner;
    inner.lambda = opts.lambda;
    let mut current_misfit = misfit(u, &current, y)?;
    let mut outer_trace = Vec::new();
    let mut total_inner = 0;
    let mut converged = false;
    let mut stopped = false;

    for k in 0..opts.max_outer {
        if opts.adaptive_inner_tol {
            inner.tol = (0.1 * current_misfit).max(1e-8);
        }
        let b = -current.clone();
        let (a_plus, trace) = nn_admm(u, &b, y, &inner).map_err(|e| CoprError::OuterFailure {
            outer: k + 1,
            source: Box::new(e),
            misfits: outer_trace.iter().map(|r: &OuterRecord| r.misfit).collect(),
        })?;
        total_inner += trace.iterations();
        current = a_plus;
        current_misfit = misfit(u, &current, y)?;
        outer_trace.push(OuterRecord {
            outer: k + 1,
            misfit: current_misfit,
            nuclear_norm: trace.records.last().map_or(f64::NAN, |r| r.nuclear_norm),
            inner_iterations: trace.iterations(),
            inner_converged: trace.converged,
        });
        if current_misfit <= opts.tau {
            converged = true;
            break;
        }
        if stop(outer_trace.last().expect("just pushed"), &current) {
            stopped = true;
            break;
        }
    }
    Ok(CoprResult {
        a: current,
        outer_trace,
        converged,
        stopped,
        total_inner,
    })
}
