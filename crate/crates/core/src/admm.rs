//! Block-structured ADMM for `min_a || M(U, a, b, y) ||_*`.
//!
//! The problem is split as `min ||X||_* s.t. X = M(U, a, b, y)`. The
//! a-update is a real least-squares problem whose normal matrix depends only
//! on `(U, b)` and is factored once per call; the X-update is singular value
//! thresholding of independent 2x2 blocks.
//!
//! The loop keeps the dual in scaled form `u = Y / rho`, so a change of the
//! penalty rescales `u` while leaving the unscaled multiplier `Y` intact.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::forward_model::{Measurements, PropagationMatrix};
use crate::lifted::{nuclear_norm, svt, BlockLifted, BlockMatrix, Mat2};
use crate::{CoefficientVector, CoprError, Result, C64};

/// What to do when the normal matrix `B^T A^T A B` is singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RankPolicy {
    /// Fail with [`CoprError::RankDeficient`].
    #[default]
    Strict,
    /// Use the minimum-norm least-squares solution.
    MinimumNorm,
}

/// Stopping rule for the proximal-gradient solve of the l1 a-update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Options {
    pub max_inner: usize,
    /// Relative objective change that ends the inner loop.
    pub tol: f64,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            max_inner: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmOptions {
    pub rho0: f64,
    /// Stop once the objective changes by at most `tol` between iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations run before the stopping rule is consulted.
    pub min_iter: usize,
    /// l1 weight on the coefficients; 0 disables the regularizer.
    pub lambda: f64,
    /// Residual-balancing ratio.
    pub mu: f64,
    /// Penalty multiplier used by residual balancing.
    pub tau: f64,
    pub rank_policy: RankPolicy,
    pub l1: L1Options,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            tol: 1e-6,
            max_iter: 2000,
            min_iter: 2,
            lambda: 0.0,
            mu: 10.0,
            tau: 2.0,
            rank_policy: RankPolicy::Strict,
            l1: L1Options::default(),
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(CoprError::invalid("rho0 must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(CoprError::invalid("tol must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CoprError::invalid("lambda must be >= 0"));
        }
        if !(self.mu > 1.0 && self.tau > 1.0) {
            return Err(CoprError::invalid(
                "residual balancing needs mu > 1 and tau > 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub nuclear_norm: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub rho: f64,
    /// Wall time of this iteration in milliseconds.
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    /// Stopping rule satisfied before `max_iter`.
    pub converged: bool,
    /// l1 a-updates that hit the inner iteration cap.
    pub l1_fallbacks: usize,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// ADMM iterate.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub a: CoefficientVector,
    pub x: BlockMatrix,
    /// Scaled dual `Y / rho`.
    pub u: BlockMatrix,
    pub rho: f64,
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
}

impl AdmmState {
    /// Unscaled multiplier `Y = rho u`.
    pub fn dual(&self) -> BlockMatrix {
        self.u.scale(self.rho)
    }
}

enum NormalSolver {
    Cholesky(Cholesky<f64, Dyn>),
    Pseudo(DMatrix<f64>),
}

/// Factored normal matrix `B^T A^T A B` of the a-update for fixed `(U, b)`.
///
/// Real embedding: `x = [Re a; Im a]`, `B x = [Re(U a); -Im(U a)]`, and `A`
/// has per-pixel rows `[2 Re X, 2 Im X; 1, 0; 1, 0; 0, 1; 0, -1]` with
/// `X = conj((U b)_i)`.
pub struct NormalFactorization {
    normal: DMatrix<f64>,
    solver: NormalSolver,
    /// `U b`.
    beta: DVector<C64>,
    max_eig: f64,
    condition: f64,
}

impl std::fmt::Debug for NormalFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormalFactorization")
            .field("dim", &self.normal.nrows())
            .field("max_eig", &self.max_eig)
            .field("condition", &self.condition)
            .finish()
    }
}

/// Per-pixel `A^T A` entries `(d00, d01, d11)`.
fn ata_block(beta: C64) -> (f64, f64, f64) {
    let (rx, ix) = (beta.re, -beta.im);
    (4.0 * rx * rx + 2.0, 4.0 * rx * ix, 4.0 * ix * ix + 2.0)
}

/// `B` as a dense real `2 n_y x 2 n_a` matrix.
pub fn real_embedding(u: &DMatrix<C64>) -> DMatrix<f64> {
    let (ny, na) = u.shape();
    let mut b = DMatrix::zeros(2 * ny, 2 * na);
    for j in 0..na {
        for i in 0..ny {
            let v = u[(i, j)];
            b[(i, j)] = v.re;
            b[(i, na + j)] = -v.im;
            b[(ny + i, j)] = -v.im;
            b[(ny + i, na + j)] = -v.re;
        }
    }
    b
}

pub fn to_real(a: &CoefficientVector) -> DVector<f64> {
    let n = a.len();
    DVector::from_fn(2 * n, |k, _| if k < n { a[k].re } else { a[k - n].im })
}

pub fn from_real(x: &DVector<f64>) -> CoefficientVector {
    let n = x.len() / 2;
    DVector::from_fn(n, |k, _| C64::new(x[k], x[n + k]))
}

pub fn precompute_normal(
    u: &PropagationMatrix,
    b: &CoefficientVector,
) -> Result<NormalFactorization> {
    precompute_normal_with(u, b, RankPolicy::Strict)
}

pub fn precompute_normal_with(
    u: &PropagationMatrix,
    b: &CoefficientVector,
    policy: RankPolicy,
) -> Result<NormalFactorization> {
    let beta = u.apply(b)?;
    let dense;
    let ud = match u.dense() {
        Some(d) => d,
        None => {
            dense = u.to_dense();
            &dense
        }
    };
    let ny = u.n_y();
    let bmat = real_embedding(ud);
    let mut db = bmat.clone();
    for i in 0..ny {
        let (d00, d01, d11) = ata_block(beta[i]);
        let top = bmat.row(i);
        let bot = bmat.row(ny + i);
        db.set_row(i, &(top * d00 + bot * d01));
        db.set_row(ny + i, &(top * d01 + bot * d11));
    }
    let mut normal = bmat.tr_mul(&db);
    normal = (&normal + normal.transpose()) * 0.5;

    let eig = SymmetricEigen::new(normal.clone());
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    let condition = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    if !(max_eig > 0.0) {
        return Err(CoprError::RankDeficient { condition });
    }
    let well_posed = condition < 1e12;
    let solver = match (well_posed, policy) {
        (true, _) => match Cholesky::new(normal.clone()) {
            Some(ch) => NormalSolver::Cholesky(ch),
            None => return Err(CoprError::RankDeficient { condition }),
        },
        (false, RankPolicy::Strict) => return Err(CoprError::RankDeficient { condition }),
        (false, RankPolicy::MinimumNorm) => {
            let cut = 1e-10 * max_eig;
            let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
            let v = &eig.eigenvectors;
            NormalSolver::Pseudo(v * DMatrix::from_diagonal(&inv) * v.transpose())
        }
    };
    Ok(NormalFactorization {
        normal,
        solver,
        beta,
        max_eig,
        condition,
    })
}

impl NormalFactorization {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.solver {
            NormalSolver::Cholesky(ch) => ch.solve(rhs),
            NormalSolver::Pseudo(p) => p * rhs,
        }
    }

    pub fn multiply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.normal * v
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.normal
    }

    pub fn beta(&self) -> &DVector<C64> {
        &self.beta
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn is_minimum_norm(&self) -> bool {
        matches!(self.solver, NormalSolver::Pseudo(_))
    }
}

/// `B^T A^T (u_admm - u_copr)` for target blocks `z`.
fn normal_rhs(
    z: &BlockMatrix,
    nf: &NormalFactorization,
    u: &PropagationMatrix,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let ny = u.n_y();
    CoprError::check_len("target blocks", ny, z.len())?;
    CoprError::check_len("measurements", ny, y.len())?;
    let mut r = DVector::zeros(ny);
    for i in 0..ny {
        let zb = &z.blocks[i].0;
        let beta = nf.beta[i];
        let (rx, ix) = (beta.re, -beta.im);
        let w1 = zb[0][0].re - (y[i] + beta.norm_sqr());
        let w2 = zb[0][1].re - rx;
        let w3 = zb[1][0].re - rx;
        let w4 = zb[0][1].im - ix;
        let w5 = zb[1][0].im + ix;
        let p = 2.0 * rx * w1 + w2 + w3;
        let q = 2.0 * ix * w1 + w4 - w5;
        // B^T [p; q] = [Re(U^H (p - jq)); Im(U^H (p - jq))]
        r[i] = C64::new(p, -q);
    }
    Ok(to_real(&u.apply_adjoint(&r)?))
}

/// Least-squares a-update: `argmin_a || Z - M(U, a, b, y) ||_F^2`.
pub fn a_update(
    z: &BlockMatrix,
    nf: &NormalFactorization,
    u: &PropagationMatrix,
    y: &Measurements,
) -> Result<CoefficientVector> {
    let rhs = normal_rhs(z, nf, u, &y.y)?;
    Ok(from_real(&nf.solve(&rhs)))
}

fn group_norm(x: &DVector<f64>, k: usize) -> f64 {
    let n = x.len() / 2;
    x[k].hypot(x[n + k])
}

fn l1_complex(x: &DVector<f64>) -> f64 {
    (0..x.len() / 2).map(|k| group_norm(x, k)).sum()
}

/// `(rho/2) (x^T N x - 2 g^T x) + lambda sum_k |a_k|` (constant dropped).
fn l1_objective(
    nf: &NormalFactorization,
    g: &DVector<f64>,
    x: &DVector<f64>,
    rho: f64,
    lambda: f64,
) -> f64 {
    0.5 * rho * (x.dot(&nf.multiply(x)) - 2.0 * g.dot(x)) + lambda * l1_complex(x)
}

fn group_shrink(v: &DVector<f64>, thr: f64) -> DVector<f64> {
    let n = v.len() / 2;
    let mut out = v.clone();
    for k in 0..n {
        let nrm = group_norm(v, k);
        let s = if nrm > thr { 1.0 - thr / nrm } else { 0.0 };
        out[k] *= s;
        out[n + k] *= s;
    }
    out
}

/// l1-regularized a-update:
/// `argmin_a (rho/2) ||Z - M(U, a, b, y)||_F^2 + lambda sum_k |a_k|`,
/// solved by accelerated proximal gradient with restart, warm-started at
/// `start`. `lambda = 0` defers to [`a_update`].
#[allow(clippy::too_many_arguments)]
pub fn a_update_l1(
    z: &BlockMatrix,
    nf: &NormalFactorization,
    u: &PropagationMatrix,
    y: &Measurements,
    lambda: f64,
    rho: f64,
    start: &CoefficientVector,
    opts: &L1Options,
) -> Result<CoefficientVector> {
    if !(lambda >= 0.0) {
        return Err(CoprError::invalid("lambda must be >= 0"));
    }
    if lambda == 0.0 {
        return a_update(z, nf, u, y);
    }
    let g = normal_rhs(z, nf, u, &y.y)?;
    let lip = rho * nf.max_eigenvalue();
    let step = 1.0 / lip;
    let thr = lambda * step;

    let mut x = to_real(start);
    let mut f_x = l1_objective(nf, &g, &x, rho, lambda);
    let mut best = (f_x, x.clone());
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for _ in 0..opts.max_inner {
        let grad = (nf.multiply(&yk) - &g) * rho;
        let x_new = group_shrink(&(&yk - grad * step), thr);
        let f_new = l1_objective(nf, &g, &x_new, rho, lambda);
        if f_new < best.0 {
            best = (f_new, x_new.clone());
        }
        if f_new > f_x {
            // Non-monotone step: restart momentum from the last iterate.
            t = 1.0;
            yk = x.clone();
            continue;
        }
        let change = (f_x - f_new).abs();
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        t = t_new;
        x = x_new;
        f_x = f_new;
        if change <= opts.tol * f_x.abs().max(1.0) {
            return Ok(from_real(&x));
        }
    }
    Err(CoprError::InnerNotConverged {
        iterations: opts.max_inner,
        best: from_real(&best.1).iter().copied().collect(),
    })
}

/// Blockwise proximal step with the scaled dual: `svt(M - u, 1/rho)`.
fn prox_scaled(m: &BlockLifted, u_scaled: &BlockMatrix, rho: f64) -> BlockMatrix {
    let thr = 1.0 / rho;
    BlockMatrix {
        blocks: (0..m.n_y())
            .map(|i| svt(&(m.block(i) - u_scaled.blocks[i]), thr))
            .collect(),
    }
}

/// X-update `argmin_X ||X||_* + (rho/2) ||X - M + Y/rho||_F^2`.
pub fn x_update(m_plus: &BlockLifted, dual: &BlockMatrix, rho: f64) -> Result<BlockMatrix> {
    if !(rho > 0.0) {
        return Err(CoprError::invalid("rho must be positive"));
    }
    CoprError::check_len("dual blocks", m_plus.n_y(), dual.len())?;
    Ok(prox_scaled(m_plus, &dual.scale(1.0 / rho), rho))
}

/// `Y + rho (X - M)`.
pub fn dual_update(
    dual: &BlockMatrix,
    x: &BlockMatrix,
    m: &BlockLifted,
    rho: f64,
) -> Result<BlockMatrix> {
    if !(rho > 0.0) {
        return Err(CoprError::invalid("rho must be positive"));
    }
    CoprError::check_len("primal blocks", dual.len(), x.len())?;
    CoprError::check_len("lifted blocks", dual.len(), m.n_y())?;
    Ok(BlockMatrix {
        blocks: (0..dual.len())
            .map(|i| dual.blocks[i] + (x.blocks[i] - m.block(i)).scale(rho))
            .collect(),
    })
}

/// Residual balancing. Returns the new penalty and rescales the scaled dual
/// `u_scaled` so that `rho * u_scaled` is unchanged.
pub fn rho_update(
    rho: f64,
    primal_res: f64,
    dual_res: f64,
    mu: f64,
    tau: f64,
    u_scaled: &mut BlockMatrix,
) -> f64 {
    let new_rho = if primal_res > mu * dual_res {
        rho * tau
    } else if dual_res > mu * primal_res {
        rho / tau
    } else {
        rho
    };
    if new_rho != rho {
        *u_scaled = u_scaled.scale(rho / new_rho);
    }
    new_rho
}

fn l1_weight(a: &CoefficientVector) -> f64 {
    a.iter().map(|v| v.norm()).sum()
}

fn all_finite(a: &CoefficientVector, x: &BlockMatrix) -> bool {
    a.iter().all(|v| v.re.is_finite() && v.im.is_finite()) && x.blocks.iter().all(Mat2::is_finite)
}

/// Solves `min_a ||M(U, a, b, y)||_* + lambda ||a||_1` from `a = -b`.
pub fn nn_admm(
    u: &PropagationMatrix,
    b: &CoefficientVector,
    y: &Measurements,
    opts: &AdmmOptions,
) -> Result<(CoefficientVector, SolveTrace)> {
    opts.validate()?;
    CoprError::check_len("measurements", u.n_y(), y.len())?;
    // The l1 path never inverts the normal matrix.
    let policy = if opts.lambda > 0.0 {
        RankPolicy::MinimumNorm
    } else {
        opts.rank_policy
    };
    let nf = precompute_normal_with(u, b, policy)?;
    nn_admm_with(u, &nf, b, y, opts)
}

/// [`nn_admm`] with a prebuilt factorization for `(U, b)`.
pub fn nn_admm_with(
    u: &PropagationMatrix,
    nf: &NormalFactorization,
    b: &CoefficientVector,
    y: &Measurements,
    opts: &AdmmOptions,
) -> Result<(CoefficientVector, SolveTrace)> {
    opts.validate()?;
    let ny = u.n_y();
    let beta = nf.beta();
    let a0: CoefficientVector = -b.clone();
    let m0 = BlockLifted::from_fields(&u.apply(&a0)?, beta, &y.y)?;
    let mut state = AdmmState {
        x: m0.to_blocks(),
        u: BlockMatrix::zeros(ny),
        a: a0,
        rho: opts.rho0,
        iter: 0,
        primal_res: 0.0,
        dual_res: 0.0,
    };
    let mut objective = nuclear_norm(&m0) + opts.lambda * l1_weight(&state.a);
    let mut trace = SolveTrace::default();

    while state.iter < opts.max_iter {
        let t0 = Instant::now();
        state.iter += 1;
        let z = BlockMatrix {
            blocks: state
                .x
                .blocks
                .iter()
                .zip(&state.u.blocks)
                .map(|(x, u)| *x + *u)
                .collect(),
        };
        let a_plus = if opts.lambda > 0.0 {
            match a_update_l1(&z, nf, u, y, opts.lambda, state.rho, &state.a, &opts.l1) {
                Ok(a) => a,
                Err(CoprError::InnerNotConverged { best, .. }) => {
                    trace.l1_fallbacks += 1;
                    DVector::from_vec(best)
                }
                Err(e) => return Err(e),
            }
        } else {
            a_update(&z, nf, u, y)?
        };
        let m_plus = BlockLifted::from_fields(&u.apply(&a_plus)?, beta, &y.y)?;
        let x_plus = prox_scaled(&m_plus, &state.u, state.rho);
        let mut primal2 = 0.0;
        for i in 0..ny {
            let r = x_plus.blocks[i] - m_plus.block(i);
            primal2 += r.frob_sqr();
            state.u.blocks[i] = state.u.blocks[i] + r;
        }
        state.primal_res = primal2.sqrt();
        state.dual_res = state.rho * x_plus.dist(&state.x);
        let nn = nuclear_norm(&m_plus);
        let new_objective = nn + opts.lambda * l1_weight(&a_plus);
        state.a = a_plus;
        state.x = x_plus;

        trace.records.push(IterRecord {
            iter: state.iter,
            nuclear_norm: nn,
            primal_res: state.primal_res,
            dual_res: state.dual_res,
            rho: state.rho,
            ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if !(new_objective.is_finite() && all_finite(&state.a, &state.x)) {
            return Err(CoprError::NumericalFailure {
                iteration: state.iter,
                reason: "non-finite iterate".into(),
                trace: Box::new(trace),
            });
        }
        let change = (new_objective - objective).abs();
        objective = new_objective;
        if state.iter >= opts.min_iter && change <= opts.tol {
            trace.converged = true;
            break;
        }
        state.rho = rho_update(
            state.rho,
            state.primal_res,
            state.dual_res,
            opts.mu,
            opts.tau,
            &mut state.u,
        );
    }
    Ok((state.a, trace))
}
