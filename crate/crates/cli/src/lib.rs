//! `ambient-lab`: runs the annotation, training, verification, schedule and
//! locality experiments from a JSON config and writes CSV, JSON and SVG
//! reports.

pub mod commands;
pub mod config;
pub mod fuzzing;
pub mod output;
pub mod svg;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    /// 2 for configuration problems, 3 for numeric or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Runtime(_) => 3,
        }
    }
}

impl From<ambient_core::Error> for CliError {
    fn from(e: ambient_core::Error) -> Self {
        match e {
            ambient_core::Error::InvalidArgument(_) | ambient_core::Error::Json(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Theorem1,
    Theorem2,
    Compare,
    Hoeffding,
    Locality,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit a noise classifier and annotate corrupted samples with t_min.
    Annotate(CommonArgs),
    /// Annotate, train, generate and score only-clean, naive and ambient-o runs.
    Pipeline(CommonArgs),
    /// Run one verification suite; exits 1 if any check fails.
    Verify {
        which: Which,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-level ambient weights and sample availability.
    Schedule(CommonArgs),
    /// Loss-vs-context curves, the window map and crop distances.
    Fields(CommonArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "ambient-lab", version, about = "Ambient diffusion toy laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Result of a successful run; `pass` is false only for failed verifications.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Annotate(c) | Command::Pipeline(c) | Command::Schedule(c) | Command::Fields(c) => c,
        Command::Verify { common, .. } => common,
    };
    let loaded = config::load_config(&common.config)?;
    let seed = common.seed.or(loaded.config.seed).unwrap_or(0);
    let mut out = output::OutputDir::create(&common.out, &loaded.sha256, seed)?;
    let cfg = &loaded.config;
    let missing = |name: &str| CliError::Config(format!("{name}: missing block for this command"));
    let pass = match &cli.command {
        Command::Annotate(_) => {
            commands::annotate(cfg.annotate.as_ref().ok_or_else(|| missing("annotate"))?, seed, &mut out)?;
            true
        }
        Command::Pipeline(_) => {
            commands::pipeline(cfg.pipeline.as_ref().ok_or_else(|| missing("pipeline"))?, seed, &mut out)?;
            true
        }
        Command::Verify { which, .. } => {
            commands::verify(*which, &cfg.verify.clone().unwrap_or_default(), seed, &mut out)?
        }
        Command::Schedule(_) => {
            commands::schedule(cfg.schedule.as_ref().ok_or_else(|| missing("schedule"))?, &mut out)?;
            true
        }
        Command::Fields(_) => {
            commands::fields(cfg.fields.as_ref().ok_or_else(|| missing("fields"))?, seed, &mut out)?;
            true
        }
    };
    Ok(Outcome { pass, files: out.written().to_vec() })
}
