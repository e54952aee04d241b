//! Command-line driver for `oed-core`: problem files, report files and the
//! benchmark suites.

use std::path::{Path, PathBuf};

use oed_core::algorithms::{run_adagpr, run_vdm, run_ybt, AlgoReport, Algorithm};
use oed_core::OedError;
use thiserror::Error;

pub mod bench;
pub mod config;
pub mod report;

pub use config::{load_problem, parse_problem, ProblemConfig};
pub use report::emit_report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{line}:{column}: {field}: {message}", file.as_deref().map(Path::display).map(|d| d.to_string()).unwrap_or_else(|| "<config>".into()))]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
        file: Option<PathBuf>,
    },

    #[error("invalid config: {0}")]
    Validation(String),

    #[error(transparent)]
    Algorithm(#[from] OedError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Algorithm(e) if !e.is_numerical() => 2,
            CliError::Algorithm(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Parse {
                line,
                column,
                field,
                message,
                ..
            } => CliError::Parse {
                line,
                column,
                field,
                message,
                file: Some(path.to_path_buf()),
            },
            other => other,
        }
    }
}

/// Runs the configured algorithm without writing anything.
pub fn execute(cfg: &ProblemConfig) -> Result<AlgoReport, CliError> {
    let model = cfg.model.build()?;
    let algo = cfg.algo_config();
    let report = match cfg.algorithm {
        Algorithm::Vdm => run_vdm(&model, &cfg.grid_points(), &algo)?,
        Algorithm::Ybt => run_ybt(&model, &cfg.grid_points(), &algo)?,
        Algorithm::AdaGpr => run_adagpr(&model, &cfg.design_bounds(&model)?, &algo)?,
    };
    Ok(report)
}

/// Runs the configured algorithm and writes the report to `cfg.output_dir`.
pub fn run(cfg: &ProblemConfig) -> Result<AlgoReport, CliError> {
    let report = execute(cfg)?;
    emit_report(&report, cfg, &cfg.output_dir)?;
    Ok(report)
}
