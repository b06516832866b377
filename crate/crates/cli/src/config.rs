//! Experiment configuration.
//!
//! Each command starts from its own preset; a TOML file overrides any subset
//! of fields (tables merge recursively), and command-line flags override the
//! file. Presets are desk-scale: m = 32, 10 trials, bases of 16 and 49
//! functions where larger grids and 100 trials would take hours.

use std::path::{Path, PathBuf};

use copr_core::admm::{AdmmOptions, RankPolicy};
use copr_core::copr::{CoprOptions, InitialGuess};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Solve,
    SparseDemo,
    Scaling,
    NoiseRobustness,
    FixedpointDiagnostics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Solve => "solve",
            Self::SparseDemo => "sparse-demo",
            Self::Scaling => "scaling",
            Self::NoiseRobustness => "noise-robustness",
            Self::FixedpointDiagnostics => "fixedpoint-diagnostics",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorForm {
    Modal,
    Zonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Pupil grid side in pixels.
    pub m: usize,
    /// Aperture radius as a fraction of the half-width.
    pub aperture: f64,
    pub form: OperatorForm,
    /// Basis functions per side (modal form).
    pub basis_k: usize,
    /// Gaussian spread; half-overlap of neighbours when absent.
    pub spread: Option<f64>,
    /// Explicit defocus coefficients in radians; otherwise `diversities`
    /// values spread uniformly over `[-max_defocus, max_defocus]`.
    pub defocus: Option<Vec<f64>>,
    pub diversities: usize,
    pub max_defocus: f64,
    /// Centered image crop in pixels (modal form); full image when absent.
    pub crop: Option<usize>,
    pub actuators: usize,
    /// Peak phase of one actuator at unit input, radians.
    pub stroke: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// `copr`, `copr-l1` or `alternating-projections`.
    pub algorithm: String,
    /// Outer stopping threshold on the l1 intensity misfit.
    pub tau: f64,
    /// Replace `tau` by the expected noise misfit `n_y sigma sqrt(2/pi)`
    /// when the noise level is known.
    pub discrepancy: bool,
    pub max_outer: usize,
    pub lambda: f64,
    pub ap_iterations: usize,
    pub adaptive_inner_tol: bool,
    pub inner: AdmmOptions,
}

impl SolverConfig {
    pub fn copr_options(&self, tau: f64) -> CoprOptions {
        CoprOptions {
            tau,
            max_outer: self.max_outer,
            inner: self.inner,
            lambda: self.lambda,
            initial: InitialGuess::Spectral,
            adaptive_inner_tol: self.adaptive_inner_tol,
        }
    }

    /// Outer threshold for data with noise standard deviation `sigma`.
    pub fn tau_for(&self, n_y: usize, sigma: f64) -> f64 {
        if self.discrepancy && sigma > 0.0 {
            (n_y as f64 * sigma * (2.0 / std::f64::consts::PI).sqrt()).max(self.tau)
        } else {
            self.tau
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseConfig {
    /// Number of nonzero coefficients in each instance.
    pub nonzeros: usize,
    /// l1 weights tried per instance; 0 is plain COPR.
    pub lambdas: Vec<f64>,
    /// Piston-aligned error below which the instance counts as recovered.
    pub success_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Basis functions per side; `n_a = k^2`.
    pub basis_k: Vec<usize>,
    /// Image crops; more than one gives the per-iteration n_y check.
    pub crops: Vec<usize>,
    /// Piston-aligned error at which a run counts as converged.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviations of the additive noise on normalized intensities.
    pub sigmas: Vec<f64>,
    pub basis_k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedpointConfig {
    /// Relative size of the start perturbation, `||eps|| / ||a*||`.
    pub perturbation: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    /// Output directory.
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    /// Noise level for `simulate` and `solve`.
    pub sigma: f64,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub sparse: SparseConfig,
    pub scaling: ScalingConfig,
    pub noise: NoiseConfig,
    pub fixedpoint: FixedpointConfig,
}

impl ExperimentConfig {
    pub fn preset(command: Command) -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};
        let mut cfg = Self {
            name: command.name().to_string(),
            seed: 1,
            trials: 10,
            out: PathBuf::from("out"),
            threads: 0,
            sigma: 0.0,
            model: ModelConfig {
                m: 32,
                aperture: 0.4,
                form: OperatorForm::Modal,
                basis_k: 4,
                spread: None,
                defocus: None,
                diversities: 5,
                max_defocus: FRAC_PI_2,
                crop: Some(16),
                actuators: 44,
                stroke: 1.0,
            },
            solver: SolverConfig {
                algorithm: "copr".into(),
                tau: 1e-8,
                discrepancy: true,
                max_outer: 100,
                lambda: 0.0,
                ap_iterations: 500,
                adaptive_inner_tol: false,
                inner: AdmmOptions::default(),
            },
            sparse: SparseConfig {
                nonzeros: 2,
                lambdas: vec![0.0, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
                success_error: 1e-3,
            },
            scaling: ScalingConfig {
                basis_k: vec![3, 4, 5, 6, 7],
                crops: vec![20],
                tolerance: 1e-5,
            },
            noise: NoiseConfig {
                sigmas: vec![0.0, 0.001, 0.003, 0.01, 0.03],
                basis_k: vec![4, 7],
            },
            fixedpoint: FixedpointConfig {
                perturbation: 0.05,
                steps: 50,
            },
        };
        match command {
            Command::Simulate | Command::Solve => {
                cfg.trials = 1;
            }
            Command::SparseDemo => {
                // 16 coefficients, 8 measurements: two defocused 2x2 crops.
                cfg.trials = 20;
                cfg.model.m = 128;
                cfg.model.defocus = Some(vec![-FRAC_PI_8, FRAC_PI_8]);
                cfg.model.crop = Some(2);
                cfg.solver.max_outer = 150;
                cfg.solver.inner.max_iter = 2000;
                cfg.solver.inner.rank_policy = RankPolicy::MinimumNorm;
            }
            Command::Scaling => {
                // Seven defocused images, 20x20 crop; the grid is enlarged so
                // that the crop stays inside the image.
                cfg.trials = 1;
                cfg.model.m = 64;
                cfg.model.diversities = 7;
                cfg.model.crop = Some(20);
                cfg.model.stroke = 0.5;
                cfg.solver.max_outer = 5000;
                cfg.solver.tau = 1e-12;
                cfg.solver.inner.max_iter = 3000;
            }
            Command::NoiseRobustness => {
                cfg.solver.max_outer = 30;
                cfg.solver.inner.max_iter = 3000;
            }
            Command::FixedpointDiagnostics => {
                cfg.trials = 1;
                cfg.model.m = 8;
                cfg.model.aperture = 0.5;
                cfg.model.form = OperatorForm::Zonal;
                cfg.model.defocus = Some(vec![0.0]);
                cfg.model.crop = None;
                cfg.solver.tau = 1e-12;
                cfg.solver.inner.tol = 1e-10;
                cfg.solver.inner.max_iter = 5000;
            }
        }
        cfg
    }

    /// Preset for `command` with the TOML document `text` merged on top.
    pub fn from_toml(command: Command, text: &str) -> CliResult<Self> {
        let overrides: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let mut base = toml::Table::try_from(Self::preset(command)).expect("preset serializes");
        merge(&mut base, overrides);
        let cfg: Self = base
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(command: Command, path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::preset(command)),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(command, &text).map_err(|e| match e {
                    CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.model.m < 2 {
            return bad("model.m must be at least 2");
        }
        if self.model.basis_k == 0
            || self.scaling.basis_k.contains(&0)
            || self.noise.basis_k.contains(&0)
        {
            return bad("basis sizes must be positive");
        }
        if self
            .noise
            .sigmas
            .iter()
            .chain([&self.sigma])
            .any(|s| !(*s >= 0.0))
        {
            return bad("noise levels must be >= 0");
        }
        if self.sparse.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return bad("sparse.lambdas must be >= 0");
        }
        if self.sparse.nonzeros == 0 {
            return bad("sparse.nonzeros must be positive");
        }
        self.solver
            .inner
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.algorithm()?;
        Ok(())
    }

    pub fn algorithm(&self) -> CliResult<Algorithm> {
        Algorithm::parse(&self.solver.algorithm)
    }

    /// Canonical TOML of everything that affects results.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 0;
        toml::to_string(&c).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Copr,
    CoprL1,
    AlternatingProjections,
}

impl Algorithm {
    pub fn parse(name: &str) -> CliResult<Self> {
        match name {
            "copr" => Ok(Self::Copr),
            "copr-l1" => Ok(Self::CoprL1),
            "alternating-projections" | "ap" => Ok(Self::AlternatingProjections),
            other => Err(CliError::Usage(format!(
                "unknown algorithm '{other}' (expected copr, copr-l1 or alternating-projections)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Copr => "copr",
            Self::CoprL1 => "copr-l1",
            Self::AlternatingProjections => "alternating-projections",
        }
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
