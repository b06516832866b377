use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use copr_cli::experiments::{fixedpoint, noise, scaling, simulate, solve, sparse};
use copr_cli::output::{ensure_dir, write_config_echo};
use copr_cli::{CliResult, Command, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "copr",
    version,
    about = "Phase retrieval experiments with sequential nuclear-norm relaxations"
)]
struct Cli {
    /// TOML file overriding the command's preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; per-trial streams derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Draw mirror phases and write operator, measurements and truth files.
    Simulate,
    /// Reconstruct coefficients from a measurement file.
    Solve {
        /// Measurements as a binary container or an `i,y` CSV file.
        #[arg(long)]
        input: PathBuf,
        /// Operator container; rebuilt from the configuration when absent.
        #[arg(long)]
        operator: Option<PathBuf>,
        /// True coefficients (JSON) for reporting the aligned error.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// copr, copr-l1 or alternating-projections.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Sparse recovery with and without the l1 term.
    SparseDemo,
    /// COPR wall time against the number of unknowns.
    Scaling,
    /// Strehl ratio of COPR and alternating projections under noise.
    NoiseRobustness,
    /// Distance-to-solution traces of the fixed-point iteration and COPR.
    FixedpointDiagnostics,
}

impl Sub {
    fn command(&self) -> Command {
        match self {
            Sub::Simulate => Command::Simulate,
            Sub::Solve { .. } => Command::Solve,
            Sub::SparseDemo => Command::SparseDemo,
            Sub::Scaling => Command::Scaling,
            Sub::NoiseRobustness => Command::NoiseRobustness,
            Sub::FixedpointDiagnostics => Command::FixedpointDiagnostics,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(cli.command.command(), cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Sub::Solve {
        algorithm: Some(a), ..
    } = &cli.command
    {
        cfg.solver.algorithm = a.clone();
    }
    cfg.validate()?;
    let out = cfg.out.clone();
    ensure_dir(&out)?;
    write_config_echo(&out, &cfg)?;
    log::info!(
        "{} config {} -> {}",
        cli.command.command().name(),
        cfg.hash(),
        out.display()
    );

    match &cli.command {
        Sub::Simulate => {
            let rows = simulate::run(&cfg, &out)?;
            println!(
                "simulated {} trial(s), n_y {} n_a {}",
                rows.len(),
                rows[0].n_y,
                rows[0].n_a
            );
        }
        Sub::Solve {
            input,
            operator,
            truth,
            ..
        } => {
            let inputs = solve::SolveInputs {
                measurements: input,
                operator: operator.as_deref(),
                truth: truth.as_deref(),
            };
            let s = solve::run(&cfg, &inputs, &out)?;
            print!(
                "{}: misfit {:.3e} after {} iterations",
                s.algorithm, s.misfit, s.iterations
            );
            match s.error {
                Some(e) => println!(", aligned error {e:.3e}"),
                None => println!(),
            }
        }
        Sub::SparseDemo => {
            let o = sparse::run(&cfg, &out)?;
            println!(
                "sparse recovery: l1 {}/{} trials, plain {}/{}",
                o.selected_recoveries(),
                cfg.trials,
                o.plain_recoveries(),
                cfg.trials
            );
        }
        Sub::Scaling => {
            let o = scaling::run(&cfg, &out)?;
            for s in &o.slopes {
                println!(
                    "crop {}: log-log slope {:.3} (per inner iteration {:.3})",
                    s.crop, s.slope_ms, s.per_inner_slope_ms
                );
            }
        }
        Sub::NoiseRobustness => {
            let o = noise::run(&cfg, &out)?;
            for r in &o.summary {
                println!(
                    "n_a {:3} sigma {:<6} {:<24} median Strehl {:.4}",
                    r.n_a, r.sigma, r.algorithm, r.strehl_median
                );
            }
        }
        Sub::FixedpointDiagnostics => {
            let rows = fixedpoint::run(&cfg, &out)?;
            for method in ["picard", "copr"] {
                if let Some(last) = rows.iter().rev().find(|r| r.method == method) {
                    println!(
                        "{method}: distance {:.3e} after {} steps",
                        last.dist, last.k
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
