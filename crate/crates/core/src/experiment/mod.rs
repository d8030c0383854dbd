//! Experiment harness: spec files, seeded sweeps over schemes and scenario
//! parameters, CSV results, reward traces, model files and convergence
//! summaries.

mod output;
mod runner;
mod spec;

pub use output::{
    emit_csv, read_results, read_timings, summarize_convergence, summarize_dir, write_model, write_trace,
    ConvergenceSummary, CsvRecord, ModelRef, ResultRow, TimingRow,
};
pub use runner::{run_experiment, run_point, ExperimentOutput, RunReport};
pub use spec::{ExperimentSpec, RequirementTuple, Sweep, SweepAxis, SweepPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("spec parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Worker count from `HOMAD_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("HOMAD_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
