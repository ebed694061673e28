//! `vwlab` command-line driver.
//!
//! Exit codes: 0 when every check passes (or the solve converges), 1 when a
//! property or convergence check fails, 2 on usage or input errors.
//! Stdout carries only JSON or JSONL; diagnostics go to stderr.

mod checks;
mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use vwlab::solver::{minimize_residual_observed, probe_param_surjectivity, probe_sigma_min_with, stratify};

use checks::{Fault, SuiteReport};
use config::{load_configuration, parse_dims, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed configuration or unreadable input.
    Usage(String),
    /// A computation that could not complete.
    Failed(String),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CmdResult = Result<ExitCode, CliError>;

#[derive(Parser)]
#[command(name = "vwlab", version, about = "Lattice workbench for the perturbed Vafa-Witten equations")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// RunConfig JSON document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the grid, as n1xn2xn3xn4.
    #[arg(long, value_parser = parse_dims)]
    grid: Option<[usize; 4]>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Determinant identity, kernel classification and basis-change
    /// invariance of the pointwise 12×12 operator.
    VerifyLemma {
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check the determinant identity in exact rational arithmetic.
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Lattice and linearization invariants on the configured grid.
    CheckOps {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Minimize ½‖F‖² from the configured initial data.
    Solve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output VWF1 path for the final configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest singular values of the deformation operator at a stored
    /// configuration, with rank stratification of B. The grid comes from the
    /// input file; τ from the configuration.
    Probe {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        /// Number of singular values.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
    },
    /// Pointwise rank of B in a stored configuration.
    Stratify {
        #[arg(long)]
        input: PathBuf,
        /// Rank threshold relative to the largest singular value of B.
        #[arg(long, default_value_t = vwlab::algebra::DEFAULT_RANK_TOL)]
        rel_tol: f64,
    },
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn report_suites(reports: &[SuiteReport]) -> io::Result<bool> {
    let mut out = io::stdout().lock();
    for r in reports {
        for f in &r.failures {
            write_json_line(&mut out, f)?;
        }
        eprintln!(
            "{:<14} {} ({} cases, worst {:.2e}, {} failures)",
            r.name,
            if r.passed() { "pass" } else { "FAIL" },
            r.cases,
            r.worst,
            r.failures.len()
        );
    }
    out.flush()?;
    Ok(reports.iter().all(SuiteReport::passed))
}

fn verify_lemma(samples: usize, seed: u64, exact: bool, fault: Option<Fault>) -> CmdResult {
    let start = Instant::now();
    let reports = [
        checks::determinant_suite(samples, seed, exact, fault),
        checks::kernel_suite(samples, seed),
        checks::basis_change_suite(samples, seed),
    ];
    let passed = report_suites(&reports)?;
    eprintln!("verify-lemma: {samples} samples per suite, {:.2}s", start.elapsed().as_secs_f64());
    Ok(exit_for(passed))
}

#[derive(Serialize)]
struct CheckRecord<'a> {
    check: &'a str,
    passed: bool,
    cases: usize,
    worst: f64,
}

fn check_ops(run: &RunConfig, fault: Option<Fault>) -> CmdResult {
    let start = Instant::now();
    let grid = run.grid()?;
    let tau = run.tau_field(grid);
    let reports = checks::operator_suites(grid, &tau, run.seed, run.check_trials, &run.tolerances, fault)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let mut out = io::stdout().lock();
    for r in &reports {
        write_json_line(&mut out, &CheckRecord { check: r.name, passed: r.passed(), cases: r.cases, worst: r.worst })?;
        for f in &r.failures {
            write_json_line(&mut out, f)?;
        }
    }
    out.flush()?;
    let passed = reports.iter().all(SuiteReport::passed);
    eprintln!(
        "check-ops on {:?}: {} of {} checks passed, {:.2}s",
        grid.dims,
        reports.iter().filter(|r| r.passed()).count(),
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(exit_for(passed))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn solve(run: &RunConfig, out: Option<PathBuf>) -> CmdResult {
    let out = out
        .or_else(|| run.output.config.clone())
        .ok_or_else(|| CliError::Usage("solve needs an output path (--out or output.config)".into()))?;
    let grid = run.grid()?;
    let tau = run.tau_field(grid);
    let init = run.initial_configuration(grid)?;

    let mut history: Box<dyn Write> = match &run.output.history {
        Some(path) => Box::new(create(path)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut write_err = None;
    let start = Instant::now();
    let outcome = minimize_residual_observed(&tau, &init, &run.solver, |rec| {
        if write_err.is_none() {
            write_err = write_json_line(&mut history, rec).err();
        }
    });
    history.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ vwlab::Error::Diverged { .. }) => {
            eprintln!("solve: {e}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(CliError::Failed(e.to_string())),
    };
    outcome.config.to_vwf1().save(&out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
    eprintln!(
        "solve: {:?} after {} iterations, ‖F‖ = {:.3e}, {:.2}s; wrote {}",
        outcome.termination,
        outcome.history.len() - 1,
        outcome.residual_norm,
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(exit_for(outcome.converged()))
}

fn probe(run: &RunConfig, input: &Path, k: Option<u64>) -> CmdResult {
    let cfg = load_configuration(input)?;
    let tau = run.tau_field(cfg.grid());
    let mut opts = run.probe_options();
    if let Some(k) = k {
        opts.k = k as usize;
    }
    let start = Instant::now();
    let report = probe_sigma_min_with(&tau, &cfg, &opts).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut out = io::stdout().lock();
    write_json_line(&mut out, &report)?;
    out.flush()?;
    eprintln!("probe: dimension {}, {:?}, {:.2}s", report.dim, report.method, start.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct StratifyRecord {
    sites: usize,
    rank_histogram: [usize; 4],
    x3_fraction: f64,
    min_sigma3: f64,
    param_rank_histogram: [usize; 10],
}

fn stratify_cmd(input: &Path, rel_tol: f64) -> CmdResult {
    if !(rel_tol > 0.0 && rel_tol.is_finite()) {
        return Err(CliError::Usage("--rel-tol must be positive".into()));
    }
    let cfg = load_configuration(input)?;
    let strat = stratify(&cfg.b, rel_tol).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut param_rank_histogram = [0usize; 10];
    for r in probe_param_surjectivity(&cfg) {
        param_rank_histogram[r] += 1;
    }
    let record = StratifyRecord {
        sites: cfg.grid().sites(),
        rank_histogram: strat.rank_histogram,
        x3_fraction: strat.x3_fraction,
        min_sigma3: strat.min_sigma3,
        param_rank_histogram,
    };
    let mut out = io::stdout().lock();
    write_json_line(&mut out, &record)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> CmdResult {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t as usize)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    match cli.command {
        Command::VerifyLemma { samples, seed, exact, inject_fault } => {
            verify_lemma(samples as usize, seed, exact, inject_fault)
        }
        Command::CheckOps { config, inject_fault } => check_ops(&config.resolve()?, inject_fault),
        Command::Solve { config, out } => solve(&config.resolve()?, out),
        Command::Probe { config, input, k } => probe(&config.resolve()?, &input, k),
        Command::Stratify { input, rel_tol } => stratify_cmd(&input, rel_tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
