//! Config-driven experiments over the `gaussvae` solvers: `run` writes result files,
//! `verify` re-checks the module invariants for one configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;
pub mod verify;

use std::path::Path;

pub use config::{Experiment, Kind, RawConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] gaussvae::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 for anything the config could fix, 3 when an iterative solver gave up.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(gaussvae::Error::NoConvergence { .. })
            | CliError::Solver(gaussvae::Error::DivergenceDetected { .. }) => 3,
            CliError::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<std::path::PathBuf>,
    pub seed: Option<u64>,
}

/// Reads and validates `path`; relative paths inside the file resolve against its directory.
pub fn load_experiment(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
    let mut raw = RawConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        raw.seed = seed;
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut exp = raw.validate(base)?;
    if let Some(dir) = &overrides.output_dir {
        exp.output = dir.clone();
    }
    Ok(exp)
}
