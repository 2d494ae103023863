//! Command surface of the `darkring` binary.
//!
//! Every command reads an INI configuration (see [`config`]), runs one stage
//! of the pipeline and writes its artifacts into the output directory.
//! Exit codes: 0 success, 2 configuration or input error, 3 physics or
//! topology error, 4 numerical non-convergence.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "darkring", version, about = "Dark toroidal optical trap workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase mask, focal-plane image and LG mode spectrum.
    Beam(Common),
    /// Focal-volume scan and barrier report.
    Scan(Common),
    /// Equal-barrier ring radius per azimuthal index.
    OptimizeRc(Common),
    /// Monte Carlo loading and relaxation run.
    Mc(Common),
    /// Relaxation-curve fits.
    Fit(FitArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `atoms.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the resolved configuration to `manifest.ini` and stdout.
    #[arg(long)]
    pub manifest: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelFlag {
    Single,
    Chirped,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Curve CSV (`time_s,f3[,sigma]`); overrides `fit.input`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Overrides `fit.model`.
    #[arg(long, value_enum)]
    pub model: Option<ModelFlag>,
}

/// Failure of a command, carrying its exit class.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(darkring::Error),
    /// A fit or search finished without converging.
    NotConverged(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<darkring::Error> for CliError {
    fn from(e: darkring::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use darkring::Error as E;
        match self {
            CliError::Config(_) => EXIT_INPUT,
            CliError::NotConverged(_) => EXIT_NUMERIC,
            CliError::Core(e) => match e {
                E::Parameter(_) | E::Singular(_) | E::Shape(_) | E::Sampling(_) | E::Format(_) | E::Io(_) => EXIT_INPUT,
                E::Topology(_) | E::OutOfDomain(_) | E::UndefinedFraction(_) => EXIT_PHYSICS,
                E::Optimization(_) | E::Stability(_) | E::DegenerateFit(_) | E::NoOscillation(_) => EXIT_NUMERIC,
            },
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("darkring: {e}");
            e.exit_code()
        }
    }
}
