//! `lspia` command-line front end: `fit`, `diagnose` and `synth`.

pub mod config;
mod run;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Settings;

/// Process exit statuses.
pub mod exit {
    pub const CONVERGED: i32 = 0;
    pub const MAX_ITERS: i32 = 2;
    pub const STAGNATED: i32 = 3;
    pub const ASSEMBLY: i32 = 4;
    pub const IO: i32 = 5;
    pub const CONFIG: i32 = 6;
}

#[derive(Parser, Debug)]
#[command(name = "lspia", version, about = "Least-squares B-spline fitting by progressive iterative approximation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit control points; writes `<prefix>_controls.csv`, `_trace.csv`, `_summary.json`.
    Fit(Invocation),
    /// Spectral and pseudo-inverse diagnostics; writes `<prefix>_report.json` or stdout.
    Diagnose(Invocation),
    /// Generate a synthetic point set; writes `<prefix>_points.csv`.
    Synth(Invocation),
}

#[derive(Args, Debug)]
pub struct Invocation {
    /// TOML file with defaults for any of the flags below.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

impl Invocation {
    fn resolve(self) -> Result<Settings, Failure> {
        match &self.config {
            Some(path) => Ok(self.settings.over(Settings::load(path)?)),
            None => Ok(self.settings),
        }
    }
}

/// An error together with the exit status it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl fmt::Display) -> Self {
        Self { code: exit::CONFIG, message: message.to_string() }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        Self { code: exit::IO, message: message.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<lspia::Error> for Failure {
    fn from(e: lspia::Error) -> Self {
        use lspia::Error::*;
        let code = match &e {
            Io(_) | Parse { .. } => exit::IO,
            Config(_) | Knots(_) | DenseLimit { .. } => exit::CONFIG,
            SingularAssembly { .. }
            | Shape(_)
            | Domain { .. }
            | Degenerate(_)
            | Index { .. }
            | NumericalFailure { .. } => exit::ASSEMBLY,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::io(e)
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit status. Messages go to stdout and errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::CONVERGED };
        }
    };
    let outcome = match cli.command {
        Command::Fit(inv) => inv.resolve().and_then(|s| run::fit(&s)),
        Command::Diagnose(inv) => inv.resolve().and_then(|s| run::diagnose(&s)),
        Command::Synth(inv) => inv.resolve().and_then(|s| run::synth(&s)),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}
