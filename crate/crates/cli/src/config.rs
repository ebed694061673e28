//! Run configuration, read from a single JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vwlab::algebra::{TauMat, DEFAULT_RANK_TOL};
use vwlab::lattice::{Configuration, Field, Grid, Vwf1};
use vwlab::oracle::Generator;
use vwlab::solver::{ProbeOptions, SigmaMethod, SolveOptions};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: [usize; 4],
    pub h: f64,
    pub seed: u64,
    pub tau: TauSpec,
    pub init: InitSpec,
    pub tolerances: Tolerances,
    /// Random instances per property in `check-ops`.
    pub check_trials: usize,
    pub solver: SolveOptions,
    pub probe: ProbeSettings,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: [3, 3, 3, 3],
            h: 1.0,
            seed: 0,
            tau: TauSpec::Zero {},
            init: InitSpec::Zero {},
            tolerances: Tolerances::default(),
            check_trials: 5,
            solver: SolveOptions::default(),
            probe: ProbeSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum TauSpec {
    Zero {},
    /// `τ = s·I` at every site.
    IdentityScale {
        s: f64,
    },
    /// Independent uniform entries in `[−amplitude, amplitude]`.
    Random {
        seed: u64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    Zero {},
    /// Uniform entries in `[−amplitude, amplitude]`, drawn from the run seed.
    Random {
        amplitude: f64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub adjoint: f64,
    pub linearization: f64,
    pub equivariance: f64,
    /// Central-difference step for the linearization check.
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { adjoint: 1e-12, linearization: 1e-9, equivariance: 1e-12, fd_step: 1e-3 }
    }
}

/// Probe options without a seed of their own; the run seed is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub k: usize,
    pub method: SigmaMethod,
    pub dense_limit: usize,
    pub max_restarts: usize,
    pub kernel_tol: f64,
    pub rank_rel_tol: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        let d = ProbeOptions::default();
        ProbeSettings {
            k: d.k,
            method: d.method,
            dense_limit: d.dense_limit,
            max_restarts: d.max_restarts,
            kernel_tol: d.kernel_tol,
            rank_rel_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    /// Final configuration of `solve`, as VWF1.
    pub config: Option<PathBuf>,
    /// Iteration history of `solve`, as JSONL. Streams to stdout when absent.
    pub history: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid, self.h).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let t = &self.tolerances;
        for (name, v) in [
            ("adjoint", t.adjoint),
            ("linearization", t.linearization),
            ("equivariance", t.equivariance),
            ("fd_step", t.fd_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("tolerances.{name} must be positive and finite")));
            }
        }
        if self.check_trials == 0 {
            return Err(CliError::Usage("check_trials must be at least 1".into()));
        }
        if self.probe.k == 0 {
            return Err(CliError::Usage("probe.k must be at least 1".into()));
        }
        match self.tau {
            TauSpec::IdentityScale { s } if !s.is_finite() => {
                return Err(CliError::Usage("tau.s must be finite".into()));
            }
            TauSpec::Random { amplitude, .. } if !(amplitude >= 0.0 && amplitude.is_finite()) => {
                return Err(CliError::Usage("tau.amplitude must be non-negative and finite".into()));
            }
            _ => {}
        }
        if let InitSpec::Random { amplitude } = self.init {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(CliError::Usage("init.amplitude must be non-negative and finite".into()));
            }
        }
        Ok(())
    }

    pub fn tau_field(&self, grid: Grid) -> Field<TauMat> {
        match self.tau {
            TauSpec::Zero {} => Field::zeros(grid),
            TauSpec::IdentityScale { s } => Field::constant(grid, TauMat::scaled_identity(s)),
            TauSpec::Random { seed, amplitude } => Generator::new(seed).field(grid, amplitude),
        }
    }

    pub fn initial_configuration(&self, grid: Grid) -> Result<Configuration, CliError> {
        match &self.init {
            InitSpec::Zero {} => Ok(Configuration::zeros(grid)),
            InitSpec::Random { amplitude } => Ok(Generator::new(self.seed).configuration(grid, *amplitude)),
            InitSpec::File { path } => {
                let cfg = load_configuration(path)?;
                if cfg.grid() != grid {
                    return Err(CliError::Usage(format!(
                        "initial configuration {} has dims {:?}, config grid is {:?}",
                        path.display(),
                        cfg.grid().dims,
                        grid.dims
                    )));
                }
                Ok(cfg)
            }
        }
    }

    pub fn probe_options(&self) -> ProbeOptions {
        let p = &self.probe;
        ProbeOptions {
            k: p.k,
            method: p.method,
            seed: self.seed,
            dense_limit: p.dense_limit,
            max_restarts: p.max_restarts,
            kernel_tol: p.kernel_tol,
            rank_rel_tol: p.rank_rel_tol,
        }
    }
}

pub fn load_configuration(path: &Path) -> Result<Configuration, CliError> {
    let file = Vwf1::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Configuration::from_vwf1(&file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parses `n1xn2xn3xn4`.
pub fn parse_dims(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 4 {
        return Err(format!("expected n1xn2xn3xn4, got `{s}`"));
    }
    let mut dims = [0usize; 4];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p.trim().parse().map_err(|_| format!("`{p}` is not a grid size"))?;
    }
    Ok(dims)
}
