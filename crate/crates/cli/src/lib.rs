//! `mclose` command-line front end.
//!
//! Every subcommand takes a model (a file path or the name of a bundled
//! model) and the same set of flags; each one uses only the flags it needs.

mod commands;
mod output;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mclose_core::closure::DEFAULT_DELTA;
use mclose_core::{ClosureError, Scheme, SimError};

pub use commands::{compare, execute, load_model, LoadedModel};
pub use output::{mc_csv, trajectory_csv};
pub use report::{CompareReport, MomentReport};

#[derive(Debug, Clone, Parser)]
#[command(name = "mclose", version, about = "Moment closure for polynomial and trigonometric SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Validate a model and print its normalized form.
    Parse(Opts),
    /// Print the open moment equations up to `--order`.
    Moments(Opts),
    /// Print the closure rule for every moment above `--order`.
    Close(Opts),
    /// Integrate the closed moment system and write a CSV trajectory.
    Run(Opts),
    /// Estimate the moments by Euler-Maruyama Monte Carlo.
    Mc(Opts),
    /// Run both pipelines on the same grid and report their agreement.
    Compare(Opts),
}

impl Command {
    pub fn opts(&self) -> &Opts {
        match self {
            Command::Parse(o)
            | Command::Moments(o)
            | Command::Close(o)
            | Command::Run(o)
            | Command::Mc(o)
            | Command::Compare(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Dm,
    Mf,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Dm => Scheme::DerivativeMatching,
            SchemeArg::Mf => Scheme::MeanField,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Model file, or a bundled model name (vdp, pendulum, ou).
    pub model: String,
    /// Truncation order M.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Dm)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub t1: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub dt: f64,
    /// Record every K-th step (the final step is always recorded).
    #[arg(long, default_value_t = 1000)]
    pub save_every: usize,
    /// Denominator clamp used when evaluating closures.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file (run, mc) or directory (compare); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Always write imaginary-part columns.
    #[arg(long)]
    pub imag: bool,
    /// Deterministic initial state, comma separated; bundled models have defaults.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
}

/// Validated settings shared by the numerical subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub order: usize,
    pub scheme: Scheme,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub save_every: usize,
    pub delta: f64,
    pub paths: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub imag: bool,
}

impl RunConfig {
    pub fn from_opts(o: &Opts) -> Result<RunConfig, CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if o.order == 0 {
            return bad("--order must be at least 1".into());
        }
        if !o.dt.is_finite() || o.dt <= 0.0 {
            return bad(format!("--dt must be positive, got {}", o.dt));
        }
        if o.t0.is_nan() || o.t1.is_nan() || o.t1 <= o.t0 {
            return bad(format!("--t1 ({}) must exceed --t0 ({})", o.t1, o.t0));
        }
        if o.save_every == 0 {
            return bad("--save-every must be at least 1".into());
        }
        if o.delta.is_nan() || o.delta <= 0.0 {
            return bad(format!("--delta must be positive, got {}", o.delta));
        }
        if o.paths < 2 {
            return bad(format!("--paths must be at least 2, got {}", o.paths));
        }
        Ok(RunConfig {
            order: o.order,
            scheme: o.scheme.into(),
            t0: o.t0,
            t1: o.t1,
            dt: o.dt,
            save_every: o.save_every,
            delta: o.delta,
            paths: o.paths,
            seed: o.seed,
            out: o.out.clone(),
            imag: o.imag,
        })
    }

    pub fn mc_config(&self) -> mclose_core::McConfig {
        mclose_core::McConfig {
            t0: self.t0,
            t1: self.t1,
            dt: self.dt,
            paths: self.paths,
            seed: self.seed,
            save_every: self.save_every,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}: file not found")]
    NotFound(String),
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: mclose_core::ParseError,
    },
    #[error("{0}")]
    Usage(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("closure failed: {0}")]
    Closure(#[from] ClosureError),
    #[error("{0}")]
    Diverged(SimError),
    #[error("{0}")]
    PathFailures(SimError),
    #[error("writing output: {0}")]
    Output(String),
    /// The reader went away; not reported.
    #[error("broken pipe")]
    BrokenPipe,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NotFound(_)
            | CliError::Read { .. }
            | CliError::Parse { .. }
            | CliError::Usage(_)
            | CliError::Model(_) => 2,
            CliError::Closure(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::PathFailures(_) => 5,
            CliError::Output(_) => 1,
            CliError::BrokenPipe => 0,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> CliError {
        match e {
            SimError::Diverged { .. } => CliError::Diverged(e),
            SimError::PathFailures { .. } => CliError::PathFailures(e),
            SimError::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<mclose_core::Error> for CliError {
    fn from(e: mclose_core::Error) -> CliError {
        match e {
            mclose_core::Error::Closure(c) => CliError::Closure(c),
            mclose_core::Error::Sim(s) => s.into(),
            other => CliError::Model(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::BrokenPipe;
        }
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> CliError {
        CliError::Output(e.to_string())
    }
}
