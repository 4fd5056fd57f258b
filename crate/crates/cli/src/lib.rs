//! Experiment orchestration for segeval: configuration, the resumable run
//! directory, the pipeline stages and report emission.

pub mod analyze;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod store;

use thiserror::Error;

pub use analyze::{analyze_run, Analysis};
pub use config::RunConfig;
pub use pipeline::{Experiment, Manifest, StageReport};
pub use store::RunDir;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no setting can run:\n  {}", .0.join("\n  "))]
    Infeasible(Vec<String>),
    #[error("{} job(s) failed:\n  {}", .0.len(), .0.join("\n  "))]
    JobFailures(Vec<String>),
    #[error("{0}")]
    Job(String),
    #[error("missing prerequisite: {0}")]
    Missing(String),
    #[error("missing cell: {0}")]
    MissingCell(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            _ => 4,
        }
    }
}

/// Runs analysis and writes `analysis.json` plus every report.
pub fn report_run(dir: &RunDir, only: Option<&str>) -> Result<Analysis, CliError> {
    let analysis = analyze_run(dir, only)?;
    store::write_file(&dir.analysis(), &store::to_json(&analysis))?;
    report::write_reports(dir, &analysis)?;
    Ok(analysis)
}

/// The whole pipeline: sample, split, train, eval, then reports.
pub fn run_all(experiment: &Experiment, only: Option<&str>) -> Result<Analysis, CliError> {
    experiment.sample()?;
    experiment.split()?;
    experiment.train()?;
    experiment.eval()?;
    report_run(&experiment.dir, only)
}
