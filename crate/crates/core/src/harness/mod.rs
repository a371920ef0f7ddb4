//! Scenario files, the end-to-end pipeline, run logs and batch runs.

mod batch;
mod io;
mod log;
mod pipeline;
mod scenario;

pub use batch::{run_batch, scenario_files, BatchRow, BatchSummary, Placement, PLACEMENT_OFFSET};
pub use io::{parse_xyz, read_xyz, write_xyz};
pub use log::{read_log, write_log, LogRecord, LogWriter};
pub use pipeline::{
    run_pipeline, run_stages, write_outputs, RunArtifacts, RunReport, Stage, StageStatus, Stages,
    Timing,
};
pub use scenario::{
    load_scenario, parse_scenario, preset, preset_names, GenerationSpec, GripperSpec, ObjectSpec,
    PoseSpec, Scenario,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
