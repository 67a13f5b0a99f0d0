//! Command-line driver for `weakkam-core`: loads a strict JSON run
//! configuration, runs one operation per invocation, and writes tidy CSV,
//! JSON reports and a manifest.
//!
//! Exit status: 0 on success, 2 for invalid input (configuration, flags),
//! 3 for numerical failure (non-convergence, divergence where a bounded
//! solution was required, failing oracle checks).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use weakkam_core::characteristics::CharacteristicsError;
use weakkam_core::critical::CriticalError;
use weakkam_core::hamiltonian::HamiltonianError;
use weakkam_core::longtime::LongtimeError;
use weakkam_core::oracle::OracleError;
use weakkam_core::propagator::PropagatorError;

pub mod commands;
pub mod config;
pub mod expr;
pub mod output;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_INVALID,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<HamiltonianError> for CliError {
    fn from(e: HamiltonianError) -> Self {
        match e {
            HamiltonianError::TransformOverflow { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        match e {
            PropagatorError::Hamiltonian(h) => h.into(),
            PropagatorError::NonConvergence { .. } | PropagatorError::MalformedField { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CharacteristicsError> for CliError {
    fn from(e: CharacteristicsError) -> Self {
        match e {
            CharacteristicsError::InvalidArgument(_) => CliError::Config(e.to_string()),
            CharacteristicsError::NoCharacteristic { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CriticalError> for CliError {
    fn from(e: CriticalError) -> Self {
        match e {
            CriticalError::Propagator(p) => p.into(),
            CriticalError::Hamiltonian(h) => h.into(),
            CriticalError::HorizonTooShort { .. } => CliError::Config(e.to_string()),
            CriticalError::NoBracket { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LongtimeError> for CliError {
    fn from(e: LongtimeError) -> Self {
        match e {
            LongtimeError::Propagator(p) => p.into(),
            LongtimeError::Diverged { .. } => CliError::Numerical(e.to_string()),
            LongtimeError::InvalidArgument(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Hamiltonian(h) => h.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Evolve the initial datum: T_t phi on the whole time grid.
    Evolve,
    /// Fundamental solution h_{x0,u0} from the configured source.
    Fundamental,
    /// Fundamental solution by Picard iteration, with its gap trace.
    Picard,
    /// Integrate one characteristic and shoot towards the configured targets.
    Characteristics,
    /// Minimum over characteristics from every node, compared with evolve.
    MinChar,
    /// Drift classification of shifts and bisection for the critical value.
    CriticalValue,
    /// Stationary (weak KAM) solution.
    Stationary,
    /// Stationary solution, barrier diagonal, Aubry set and representation.
    Aubry,
    /// Barrier field B(x0, u0; .) from the configured source.
    Barrier,
    /// Built-in oracle comparison suite.
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Fundamental => "fundamental",
            Command::Picard => "picard",
            Command::Characteristics => "characteristics",
            Command::MinChar => "min-char",
            Command::CriticalValue => "critical-value",
            Command::Stationary => "stationary",
            Command::Aubry => "aubry",
            Command::Barrier => "barrier",
            Command::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Hamilton-Jacobi equations with u-dependent Hamiltonians on the circle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides output.directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    subcommand: &'static str,
    config_path: String,
    config: &'a RunConfig,
    threads: usize,
    elapsed_seconds: f64,
    status: &'static str,
    exit_code: i32,
    error: Option<String>,
    warnings: &'a [String],
    outputs: &'a [String],
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return EXIT_INVALID;
    };
    let (config, base_dir) = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let mut artifacts = match output::Artifacts::create(&out_dir) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_INVALID;
        }
    };
    let mut warnings = Vec::new();
    let echo = config.clone();
    let result = pool.install(|| {
        let resolved = config.resolve(&base_dir)?;
        commands::execute(cli.command, &resolved, &mut artifacts, &mut warnings)
    });
    for w in &warnings {
        log::warn!("{w}");
    }
    let exit_code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => e.exit_code(),
    };
    let outputs = artifacts.written().to_vec();
    let manifest = Manifest {
        tool: "weakkam",
        version: env!("CARGO_PKG_VERSION"),
        core_version: weakkam_core::VERSION,
        subcommand: cli.command.name(),
        config_path: config_path.display().to_string(),
        config: &echo,
        threads: pool.current_num_threads(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        status: if result.is_ok() { "ok" } else { "error" },
        exit_code,
        error: result.as_ref().err().map(ToString::to_string),
        warnings: &warnings,
        outputs: &outputs,
    };
    if let Err(e) = artifacts.write_json("manifest.json", &manifest) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match result {
        Ok(()) => {
            println!("{}: wrote {} files to {}", cli.command.name(), outputs.len() + 1, artifacts.dir().display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code
        }
    }
}
