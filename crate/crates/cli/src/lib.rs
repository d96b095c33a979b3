//! Command-line experiments for `lattes-core`.
//!
//! Every computing subcommand resolves a [`config::RunConfig`] from flags and
//! an optional TOML file, writes its outputs under `--out`, and stamps each
//! file with the SHA-256 of the config's canonical JSON. `verify` checks the
//! stamp and can rerun the command to compare bytes.

pub mod commands;
pub mod config;
pub mod output;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::path::PathBuf;

pub use commands::{classify, execute, Classification, ReportVerdict};
pub use config::{resolve, Invocation, RunArgs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(lattes_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl From<lattes_core::Error> for CliError {
    fn from(e: lattes_core::Error) -> Self {
        use lattes_core::Error as E;
        match e {
            // bad input rather than a failed computation
            E::InvalidParameter(msg) => CliError::Usage(msg),
            E::InvalidDegree(_) | E::DegenerateMap { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::Verification(_) => "verification",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrorJson<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&ErrorJson {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error serializes")
    }
}

#[derive(Debug, Parser)]
#[command(name = "lattes-lab", version, about = "Equilibrium-measure experiments for rational maps of the sphere")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Backward-orbit sample of the equilibrium measure.
    Sample(RunArgs),
    /// Green-measure density on a chart window.
    Green(RunArgs),
    /// Lyapunov exponent.
    Lyapunov(RunArgs),
    /// Fixed-mass dimension and the dimension bound.
    Dimension(RunArgs),
    /// Derivative-ratio series and B/D/V membership fractions.
    Lindiag(RunArgs),
    /// Degree-4 Lattès map from lattice invariants.
    LattesMake(RunArgs),
    /// Consolidated LATTES-LIKE / GENERIC / INCONCLUSIVE verdict.
    Report(RunArgs),
    /// Recompute the config hash stamped in an output file.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// CSV or JSON file written by another subcommand.
    pub file: PathBuf,
    /// Also rerun the command and compare the file byte for byte.
    #[arg(long)]
    pub rerun: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Green(_) => "green",
            Command::Lyapunov(_) => "lyapunov",
            Command::Dimension(_) => "dimension",
            Command::Lindiag(_) => "lindiag",
            Command::LattesMake(_) => "lattes-make",
            Command::Report(_) => "report",
            Command::Verify(_) => "verify",
        }
    }
}

/// Runs one parsed command, returning the files written.
pub fn dispatch(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let name = cli.command.name();
    match cli.command {
        Command::Verify(v) => commands::verify(&v).map(|_| Vec::new()),
        Command::Sample(a)
        | Command::Green(a)
        | Command::Lyapunov(a)
        | Command::Dimension(a)
        | Command::Lindiag(a)
        | Command::LattesMake(a)
        | Command::Report(a) => execute(&resolve(name, &a)?),
    }
}

/// Full program: parse, run, report errors as JSON on stderr. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
