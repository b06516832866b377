//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the run
//! fails if any criterion fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 1 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use copr_cli::config::Command;
use copr_cli::experiments::{fixedpoint, noise, scaling, sparse};
use copr_cli::output::csv_without_timing;
use copr_cli::ExperimentConfig;
use copr_core::admm::{a_update, precompute_normal, x_update};
use copr_core::fixedpoint::{lambda_root, t_scalar, ScalarImage};
use copr_core::forward_model::{Measurements, PropagationMatrix};
use copr_core::lifted::{build_m, nuclear_norm, rank_residuals, BlockMatrix, Mat2};
use copr_core::{CoefficientVector, C64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn gauss(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn dense(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| gauss(rng))
}

fn unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    dense(n, n, rng).qr().q()
}

fn vector(n: usize, rng: &mut ChaCha8Rng) -> CoefficientVector {
    DVector::from_fn(n, |_, _| gauss(rng))
}

fn measurements(y: DVector<f64>) -> Measurements {
    Measurements::from_normalized(y, 1.0).unwrap()
}

/// Lifted matrix assembled entry by entry as a dense `2 n_y x 2 n_y`
/// block-diagonal matrix.
fn lifted_dense(
    u: &DMatrix<C64>,
    a: &CoefficientVector,
    b: &CoefficientVector,
    y: &DVector<f64>,
) -> DMatrix<C64> {
    let (al, be) = (u * a, u * b);
    let n = y.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let s = al[i] + be[i];
        m[(2 * i, 2 * i)] = c(y[i] - al[i].norm_sqr() + s.norm_sqr(), 0.0);
        m[(2 * i, 2 * i + 1)] = s.conj();
        m[(2 * i + 1, 2 * i)] = s;
        m[(2 * i + 1, 2 * i + 1)] = c(1.0, 0.0);
    }
    m
}

fn block_diag(b: &BlockMatrix) -> DMatrix<C64> {
    let n = b.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, blk) in b.blocks.iter().enumerate() {
        for r in 0..2 {
            for s in 0..2 {
                m[(2 * i + r, 2 * i + s)] = blk.0[r][s];
            }
        }
    }
    m
}

fn dense_nuclear(m: &DMatrix<C64>) -> f64 {
    m.singular_values().sum()
}

fn det2(b: &Mat2) -> C64 {
    b.0[0][0] * b.0[1][1] - b.0[0][1] * b.0[1][0]
}

fn intensity_gap(u: &DMatrix<C64>, a: &CoefficientVector, y: &DVector<f64>) -> DVector<f64> {
    let ua = u * a;
    DVector::from_fn(y.len(), |i, _| (y[i] - ua[i].norm_sqr()).abs())
}

fn random_problem(rng: &mut ChaCha8Rng, unitary_u: bool) -> DMatrix<C64> {
    let na = rng.random_range(1..=8);
    if unitary_u {
        unitary(na, rng)
    } else {
        let ny = rng.random_range(1..=16);
        dense(ny, na, rng)
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut agree, mut perturbed) = (0, 0);
    for k in 0..200 {
        let ud = random_problem(&mut rng, k % 2 == 0);
        let u = PropagationMatrix::from_dense(ud.clone());
        let (ny, na) = ud.shape();
        let a = vector(na, &mut rng);
        let b = vector(na, &mut rng);
        let exact = (&ud * &a).map(|z| z.norm_sqr());
        // Every third instance is consistent; the rest carry one or more
        // visible intensity errors.
        let mut y = exact.clone();
        if k % 3 != 0 {
            for i in 0..ny {
                if i == 0 || rng.random_bool(0.3) {
                    y[i] += rng.random_range(1e-3..1.0);
                }
            }
        }
        let m = build_m(&u, &a, &b, &measurements(y.clone())).map_err(|e| e.to_string())?;
        let dets: Vec<f64> = (0..ny).map(|i| det2(&m.block(i)).norm()).collect();
        let gap = intensity_gap(&ud, &a, &y);
        let rank_ok = dets.iter().cloned().fold(0.0, f64::max) <= 1e-10;
        let data_ok = gap.max() <= 1e-10;
        if rank_ok != data_ok {
            return Err(format!(
                "instance {k}: det test {rank_ok}, intensity test {data_ok}"
            ));
        }
        let rr = rank_residuals(&m);
        for i in 0..ny {
            if (rr[i] - dets[i]).abs() > 1e-10 * (1.0 + dets[i])
                || (dets[i] - gap[i]).abs() > 1e-10 * (1.0 + gap[i])
            {
                return Err(format!(
                    "instance {k} block {i}: |det| {} vs gap {}",
                    dets[i], gap[i]
                ));
            }
        }
        agree += 1;

        if k % 3 == 0 {
            let j = rng.random_range(0..ny);
            let delta = rng.random_range(1e-6..1.0);
            let mut yp = y.clone();
            yp[j] += delta;
            let mp = build_m(&u, &a, &b, &measurements(yp)).map_err(|e| e.to_string())?;
            for (i, d) in dets.iter().enumerate() {
                let change = det2(&mp.block(i)).norm() - d;
                let expect = if i == j { delta } else { 0.0 };
                if (change - expect).abs() > 1e-10 {
                    return Err(format!(
                        "instance {k}: block {i} |det| changed by {change}, expected {expect}"
                    ));
                }
            }
            perturbed += 1;
        }
    }
    Ok(format!(
        "{agree} instances agree, {perturbed} single-entry perturbations exact"
    ))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let ud = random_problem(&mut rng, k % 2 == 0);
        let u = PropagationMatrix::from_dense(ud.clone());
        let (ny, na) = ud.shape();
        let a = vector(na, &mut rng);
        let y = DVector::from_fn(ny, |_, _| rng.random_range(0.0..4.0));
        let minus_a = -a.clone();
        let expected = intensity_gap(&ud, &a, &y).sum() + ny as f64;
        let m = build_m(&u, &a, &minus_a, &measurements(y.clone())).map_err(|e| e.to_string())?;
        let ours = nuclear_norm(&m);
        let reference = dense_nuclear(&lifted_dense(&ud, &a, &minus_a, &y));
        for (what, v) in [("block", ours), ("dense SVD", reference)] {
            let err = (v - expected).abs();
            worst = worst.max(err / ny as f64);
            if err > 1e-8 * ny as f64 {
                return Err(format!(
                    "instance {k}: {what} nuclear norm {v} vs {expected}"
                ));
            }
        }
    }
    Ok(format!(
        "200 instances, worst error {worst:.2e} per measurement"
    ))
}

fn flatten(m: &DMatrix<C64>) -> DVector<f64> {
    DVector::from_iterator(2 * m.len(), m.iter().flat_map(|z| [z.re, z.im]))
}

/// `argmin_a ||Z - M(a)||_F` through the Jacobian of the affine map `a -> M(a)`
/// and an SVD least-squares solve.
fn ls_oracle(
    ud: &DMatrix<C64>,
    b: &CoefficientVector,
    y: &DVector<f64>,
    z: &DMatrix<C64>,
) -> CoefficientVector {
    let na = ud.ncols();
    let offset = flatten(&lifted_dense(ud, &DVector::zeros(na), b, y));
    let mut jac = DMatrix::zeros(offset.len(), 2 * na);
    for k in 0..2 * na {
        let mut a = DVector::zeros(na);
        a[k % na] = if k < na { c(1.0, 0.0) } else { c(0.0, 1.0) };
        jac.set_column(k, &(flatten(&lifted_dense(ud, &a, b, y)) - &offset));
    }
    let x = jac
        .svd(true, true)
        .solve(&(flatten(z) - offset), 1e-14)
        .unwrap();
    DVector::from_fn(na, |k, _| c(x[k], x[na + k]))
}

/// Singular value soft-thresholding of the full dense matrix.
fn prox_oracle(v: &DMatrix<C64>, thr: f64) -> DMatrix<C64> {
    let svd = v.clone().svd(true, true);
    let s = svd.singular_values.map(|s| c((s - thr).max(0.0), 0.0));
    svd.u.unwrap() * DMatrix::from_diagonal(&s) * svd.v_t.unwrap()
}

fn random_blocks(n: usize, rng: &mut ChaCha8Rng) -> BlockMatrix {
    BlockMatrix {
        blocks: (0..n)
            .map(|_| Mat2::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng)))
            .collect(),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_a, mut worst_x): (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let ny = rng.random_range(1..=8);
        let na = rng.random_range(1..=4.min(ny));
        let ud = dense(ny, na, &mut rng);
        let u = PropagationMatrix::from_dense(ud.clone());
        let b = vector(na, &mut rng);
        let y = DVector::from_fn(ny, |_, _| rng.random_range(0.05..2.0));
        let ym = measurements(y.clone());

        let z = random_blocks(ny, &mut rng);
        let nf = precompute_normal(&u, &b).map_err(|e| e.to_string())?;
        let a = a_update(&z, &nf, &u, &ym).map_err(|e| e.to_string())?;
        let reference = ls_oracle(&ud, &b, &y, &block_diag(&z));
        let err = (&a - &reference).norm() / (1.0 + reference.norm());
        worst_a = worst_a.max(err);
        if err > 1e-8 {
            return Err(format!(
                "instance {k} (n_y {ny}, n_a {na}): a-update off by {err:.2e}"
            ));
        }

        let a_cur = vector(na, &mut rng);
        let dual = random_blocks(ny, &mut rng);
        let rho = rng.random_range(0.1..10.0);
        let m = build_m(&u, &a_cur, &b, &ym).map_err(|e| e.to_string())?;
        let x = x_update(&m, &dual, rho).map_err(|e| e.to_string())?;
        let target = lifted_dense(&ud, &a_cur, &b, &y) - block_diag(&dual) / c(rho, 0.0);
        let err = (block_diag(&x) - prox_oracle(&target, 1.0 / rho)).norm();
        worst_x = worst_x.max(err);
        if err > 1e-8 {
            return Err(format!(
                "instance {k} (n_y {ny}, n_a {na}): x-update off by {err:.2e}"
            ));
        }
    }
    Ok(format!(
        "100 instances, worst a-update {worst_a:.2e}, worst x-update {worst_x:.2e}"
    ))
}

/// Squared nuclear norm of `[[y - 2 Re(conj(x) a) + |a|^2, conj(x - a)], [x - a, 1]]`
/// from `||B||_*^2 = ||B||_F^2 + 2 |det B|`.
fn f_oracle(x: C64, a: C64, y: f64) -> f64 {
    let d = x - a;
    let top = y - 2.0 * (x.conj() * a).re + a.norm_sqr();
    let frob = top * top + 2.0 * d.norm_sqr() + 1.0;
    let det = top - d.norm_sqr();
    frob + 2.0 * det.abs()
}

/// Best point on the circle `|x| = sqrt(y)`, where the objective has a kink
/// that stalls a compass search: angle grid, then golden-section refinement.
fn circle_min(a: C64, y: f64) -> (C64, f64) {
    let r = y.sqrt();
    let f = |t: f64| f_oracle(C64::from_polar(r, t), a, y);
    let n = 720;
    let h = std::f64::consts::TAU / n as f64;
    let k = (0..n)
        .min_by(|&i, &j| f(i as f64 * h).total_cmp(&f(j as f64 * h)))
        .unwrap();
    let (mut lo, mut hi) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while hi - lo > 1e-12 {
        let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(m1) < f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    (C64::from_polar(r, t), f(t))
}

/// Polar grid followed by a shrinking compass search, compared against the
/// best point on the kink circle.
fn brute_min(a: C64, y: f64) -> C64 {
    let rmax = 2.0 * a.norm().max(y.sqrt()) + 0.1;
    let mut best = (c(0.0, 0.0), f_oracle(c(0.0, 0.0), a, y));
    for ir in 1..=160 {
        let r = rmax * ir as f64 / 160.0;
        for k in 0..128 {
            let z = C64::from_polar(r, std::f64::consts::TAU * k as f64 / 128.0);
            let f = f_oracle(z, a, y);
            if f < best.1 {
                best = (z, f);
            }
        }
    }
    let mut step = rmax / 100.0;
    while step > 1e-10 {
        let mut moved = false;
        for (dx, dy) in [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (0.7, 0.7),
            (-0.7, -0.7),
            (0.7, -0.7),
            (-0.7, 0.7),
        ] {
            let z = best.0 + c(dx * step, dy * step);
            let f = f_oracle(z, a, y);
            if f < best.1 {
                best = (z, f);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let on_circle = circle_min(a, y);
    if on_circle.1 < best.1 {
        on_circle.0
    } else {
        best.0
    }
}

fn g_oracle(t: f64, y: f64) -> f64 {
    t.powi(3) + 2.0 * (1.0 - y) * t * t + (y * y - 6.0 * y + 1.0) * t - 4.0 * y
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let a = C64::from_polar(
            rng.random_range(0.01..3.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let y = rng.random_range(0.0..4.0);
        let ours = match t_scalar(a, y).map_err(|e| e.to_string())? {
            ScalarImage::Point(z) => z,
            ScalarImage::Disk { .. } => return Err(format!("case {k}: disk image for a = {a}")),
        };
        let err = (ours - brute_min(a, y)).norm();
        worst = worst.max(err);
        if err > 1e-4 {
            return Err(format!(
                "case {k}: a = {a}, y = {y}: t_scalar {ours} off by {err:.2e}"
            ));
        }
    }

    let mut residual: f64 = 0.0;
    let mut above_bracket = 0;
    for k in 0..1000 {
        let y = 10f64.powf(rng.random_range(-3.0..2.0));
        let l = lambda_root(y).map_err(|e| e.to_string())?;
        let g = g_oracle(l, y).abs() / y.powi(3).max(1.0);
        residual = residual.max(g);
        if g > 1e-10 {
            return Err(format!("root {k}: g({l}) = {g:.2e} at y = {y}"));
        }
        if !(l > 0.0 && l < 4.0 * y) {
            return Err(format!("root {k}: lambda {l} outside (0, 4y) at y = {y}"));
        }
        // g(9y/4) > 0 once y > 4/3, so the lower end holds only below that.
        if y < 4.0 / 3.0 && !(l > 2.25 * y) {
            return Err(format!("root {k}: lambda {l} below 9y/4 at y = {y}"));
        }
        if y >= 4.0 / 3.0 && l <= 2.25 * y {
            above_bracket += 1;
        }
    }

    for _ in 0..100 {
        let a = gauss(&mut rng);
        if t_scalar(a, 0.0).map_err(|e| e.to_string())? != ScalarImage::Point(a / 2.0) {
            return Err(format!("y = 0 image of {a} is not a/2"));
        }
    }
    Ok(format!(
        "1000 scalar cases within {worst:.1e}, root residual {residual:.1e}, \
         lower bracket end exceeded in {above_bracket} draws with y >= 4/3, y = 0 exact"
    ))
}

fn preset(command: Command) -> ExperimentConfig {
    ExperimentConfig::load(command, None).expect("preset")
}

fn criterion_5() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = preset(Command::FixedpointDiagnostics);
    let start = Instant::now();
    let rows = fixedpoint::run(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut notes = Vec::new();
    for method in ["picard", "copr"] {
        let trace: Vec<_> = rows.iter().filter(|r| r.method == method).collect();
        let reached = trace
            .iter()
            .find(|r| r.dist.sqrt() <= 1e-5)
            .map(|r| r.k)
            .ok_or_else(|| format!("{method}: distance to solutions never below 1e-5"))?;
        if reached > 50 {
            return Err(format!("{method}: reached 1e-5 only at step {reached}"));
        }
        // Ratios are meaningful while the distance sits above round-off.
        let worst = trace
            .windows(2)
            .skip(1)
            .filter(|w| w[0].dist > 1e-24)
            .filter_map(|w| w[1].ratio)
            .fold(0.0, f64::max);
        if worst >= 1.0 {
            return Err(format!(
                "{method}: per-step distance ratio {worst} after burn-in"
            ));
        }
        let last = trace.last().unwrap();
        notes.push(format!(
            "{method} within 1e-5 at step {reached}, worst ratio {worst:.3}, final distance {:.1e}, error vs generating signal {:.1e}",
            last.dist.sqrt(),
            last.error.sqrt()
        ));
    }
    if elapsed > Duration::from_secs(30) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("{}; {elapsed:.1?}", notes.join("; ")))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = preset(Command::SparseDemo);
    let o = sparse::run(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let (hits, plain) = (o.selected_recoveries(), o.plain_recoveries());
    let msg = format!(
        "l1-COPR recovered {hits}/{} seeds, plain COPR {plain}/{}",
        cfg.trials, cfg.trials
    );
    if hits * 10 >= cfg.trials * 6 {
        Ok(msg)
    } else {
        Err(format!("{msg}; needs 60%"))
    }
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = preset(Command::Scaling);
    let start = Instant::now();
    let o = scaling::run(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if let Some(r) = o.rows.iter().find(|r| !r.reached) {
        return Err(format!(
            "n_a {} did not reach the tolerance (error {:.1e})",
            r.n_a, r.error
        ));
    }
    let n_a: Vec<usize> = o.rows.iter().map(|r| r.n_a).collect();
    if n_a != [9, 16, 25, 36, 49] {
        return Err(format!("unexpected sizes {n_a:?}"));
    }
    let s = &o.slopes[0];
    let msg = format!(
        "n_y {}, slope {:.3} over n_a {n_a:?}; {elapsed:.1?}",
        o.rows[0].n_y, s.slope_ms
    );
    if s.slope_ms > 1.3 {
        return Err(msg);
    }
    if elapsed > Duration::from_secs(300) {
        return Err(format!("{msg}: over 5 min"));
    }
    Ok(msg)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = preset(Command::NoiseRobustness);
    let start = Instant::now();
    let o = noise::run(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut sizes: Vec<usize> = o.summary.iter().map(|r| r.n_a).collect();
    sizes.dedup();
    let largest = *sizes.iter().max().unwrap();
    let get = |n_a: usize, sigma: f64, alg: &str| {
        o.median(n_a, sigma, alg)
            .ok_or(format!("no {alg} at n_a {n_a}, sigma {sigma}"))
    };
    let clean = get(largest, 0.0, "copr")?;
    if clean < 0.99 {
        return Err(format!(
            "noise-free median Strehl {clean:.4} at n_a {largest}"
        ));
    }
    let mut lines = vec![format!("noise-free median {clean:.4} at n_a {largest}")];
    let mut below = Vec::new();
    for &n_a in &sizes {
        for &sigma in &cfg.noise.sigmas {
            let (cp, ap) = (
                get(n_a, sigma, "copr")?,
                get(n_a, sigma, "alternating-projections")?,
            );
            lines.push(format!(
                "n_a {n_a} sigma {sigma}: copr {cp:.4} vs ap {ap:.4}"
            ));
            // Both methods are essentially exact without noise; the ordering
            // is asserted where noise is present.
            if sigma > 0.0 && cp < ap {
                below.push(format!("n_a {n_a} sigma {sigma}"));
            }
        }
    }
    lines.push(format!("{elapsed:.1?}"));
    if !below.is_empty() {
        return Err(format!(
            "{}; COPR below alternating projections at {}",
            lines.join(", "),
            below.join(", ")
        ));
    }
    if elapsed > Duration::from_secs(600) {
        return Err(format!("{}; over 10 min", lines.join(", ")));
    }
    Ok(lines.join(", "))
}

const SMALL_CONFIG: &str = r#"
trials = 2

[model]
basis_k = 3

[solver]
max_outer = 20

[solver.inner]
max_iter = 300

[sparse]
lambdas = [0.0, 0.01]

[scaling]
basis_k = [2, 3]

[noise]
sigmas = [0.0, 0.01]
basis_k = [3]

[fixedpoint]
steps = 10
"#;

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Process::new(env!("CARGO_BIN_EXE_copr"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!(
            "copr {args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        ))
    }
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut compared = 0;
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        let name_s = name.to_string_lossy();
        let same = if name_s == "config_echo.toml" {
            // Output directory and thread count differ on purpose; the
            // leading hash line covers everything else.
            let first = |p: &Path| {
                std::fs::read_to_string(p).map(|t| t.lines().next().unwrap_or("").to_string())
            };
            first(&pa).map_err(|e| e.to_string())? == first(&pb).map_err(|e| e.to_string())?
        } else if name_s.ends_with(".csv") {
            csv_without_timing(&pa).map_err(|e| e.to_string())?
                == csv_without_timing(&pb).map_err(|e| e.to_string())?
        } else {
            std::fs::read(&pa).map_err(|e| e.to_string())?
                == std::fs::read(&pb).map_err(|e| e.to_string())?
        };
        if !same {
            return Err(format!("{} differs between runs", pa.display()));
        }
        compared += 1;
    }
    Ok(compared)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL_CONFIG).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let mut files = 0;
    let commands = [
        "simulate",
        "solve",
        "sparse-demo",
        "scaling",
        "noise-robustness",
        "fixedpoint-diagnostics",
    ];
    for cmd in commands {
        let mut outs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "2")] {
            let out = dir.path().join(format!("{cmd}-{run}"));
            let out_s = out.to_str().unwrap().to_string();
            let mut args = vec![
                cmd,
                "--config",
                cfg,
                "--seed",
                "2024",
                "--threads",
                threads,
                "--out",
                &out_s,
            ];
            let input = dir.path().join("simulate-0").join("measurements_0.cprb");
            let input_s = input.to_str().unwrap().to_string();
            if cmd == "solve" {
                args.extend(["--input", &input_s]);
            }
            run_cli(&args)?;
            outs.push(out);
        }
        files += compare_dirs(&outs[0], &outs[1])?;
    }
    Ok(format!(
        "{} commands, {files} output files identical across runs and thread counts",
        commands.len()
    ))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "block determinant vs intensity consistency", criterion_1),
        (2, "nuclear-norm identity at b = -a", criterion_2),
        (3, "ADMM subproblem oracles", criterion_3),
        (4, "scalar fixed-point operator", criterion_4),
        (5, "unitary local convergence", criterion_5),
        (6, "sparse recovery", criterion_6),
        (7, "scaling", criterion_7),
        (8, "noise robustness", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(msg) => println!("criterion {n} PASS ({name}): {msg}"),
            Err(msg) => {
                println!("criterion {n} FAIL ({name}): {msg}");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
