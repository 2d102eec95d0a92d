//! Command-line front end: `ckpz <subcommand> --config FILE [--out DIR]`.
//!
//! Exit codes: 0 when every gate passes, 1 when some gate fails, 2 for
//! schema, validation or I/O errors, 3 for numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod report;

use config::Config;
use report::{write_json, Report, Timing};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] kpz_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ckpz", version, about = "Coupled KPZ / stochastic Burgers experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Algebraic conditions on the coupling tensor.
    CheckTensor(Common),
    /// Renormalisation constants for a list of ε.
    Renorm(Common),
    /// Run trajectories and write snapshots.
    Simulate(Common),
    /// z-test the Galerkin dynamics against the Gaussian measure μ_A.
    InvarianceTest(Common),
    /// Monte-Carlo moments of the driver processes.
    Moments(Common),
    /// Drift between the two mollified height schemes.
    Drift(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replica count.
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads for replicas (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::CheckTensor(c) => ("check-tensor", c),
            Command::Renorm(c) => ("renorm", c),
            Command::Simulate(c) => ("simulate", c),
            Command::InvarianceTest(c) => ("invariance-test", c),
            Command::Moments(c) => ("moments", c),
            Command::Drift(c) => ("drift", c),
        }
    }
}

fn load(common: &Common) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut cfg = Config::parse(&text)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.replicas {
        if r == 0 {
            return Err(CliError::Schema("--replicas must be at least 1".into()));
        }
        cfg.replicas = r;
    }
    Ok(cfg)
}

fn execute(command: &Command) -> Result<bool, CliError> {
    let (name, common) = command.parts();
    let cfg = load(common)?;
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let threads = common.threads;
    let start = Instant::now();
    let (tests, result) = match command {
        Command::CheckTensor(_) => commands::check_tensor(&cfg, out)?,
        Command::Renorm(_) => commands::renorm(&cfg, out)?,
        Command::Simulate(_) => commands::simulate_cmd(&cfg, out, threads)?,
        Command::InvarianceTest(_) => commands::invariance(&cfg, out, threads)?,
        Command::Moments(_) => commands::moments(&cfg, out, threads)?,
        Command::Drift(_) => commands::drift(&cfg, out, threads)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    for t in &tests {
        let tag = if t.passed { "PASS" } else { "FAIL" };
        let op = serde_json::to_value(t.comparison).expect("comparison serialises");
        println!("[{tag}] {}: {:.6e} {} {:.6e}", t.name, t.statistic, op.as_str().unwrap_or("?"), t.threshold);
    }
    let report = Report::new(name, &cfg, tests, result);
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timing.json"), &Timing { command: name, wall_clock_seconds: elapsed })?;
    Ok(report.passed)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
