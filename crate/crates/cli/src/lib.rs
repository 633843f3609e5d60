pub mod commands;
pub mod config;
pub mod grid;
pub mod overrides;
pub mod report;

use anyhow::Result;

use config::ExperimentConfig;
use report::{write_outputs, Report, RunLog, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_PARTIAL_FAILURE: i32 = 2;
/// Invalid command line or configuration (BSD `EX_USAGE`).
pub const EXIT_USAGE: i32 = 64;
/// Output directory not writable (BSD `EX_IOERR`).
pub const EXIT_IO: i32 = 74;

#[derive(Debug)]
pub enum RunError {
    Usage(anyhow::Error),
    Io(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(e) => write!(f, "usage error: {e:#}"),
            RunError::Io(e) => write!(f, "i/o error: {e:#}"),
        }
    }
}

impl std::error::Error for RunError {}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Ok => EXIT_OK,
        Status::ChecksFailed => EXIT_CHECKS_FAILED,
        Status::PartialFailure => EXIT_PARTIAL_FAILURE,
    }
}

/// Runs a command in memory, returning the report and the artifact contents.
pub fn execute(cfg: &ExperimentConfig) -> Result<(Report, Vec<(String, String)>)> {
    cfg.validate()?;
    let mut log = RunLog::default();
    commands::execute(cfg, &mut log)?;
    Ok(log.into_report(cfg))
}

/// Runs a command and writes its outputs to `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig) -> std::result::Result<Report, RunError> {
    let (report, artifacts) = execute(cfg).map_err(RunError::Usage)?;
    write_outputs(&cfg.output_dir, &report, &artifacts).map_err(RunError::Io)?;
    Ok(report)
}
