//! Experiment harness: dataset generation, sweeps, scoring and reports.
//!
//! Every file the harness writes gets a sibling `<file>.config.json` that
//! records the resolved configuration it was produced with; reports embed
//! those echoes directly.

pub mod config;
pub mod dataset;
pub mod record;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::taskgen::TaskGenError;

pub use config::{ExperimentConfig, QaMode, TaskSpec};
pub use dataset::{cmd_gen, load_longbench_jsonl, GenReport, LongBenchLoad, QaSample};
pub use record::{Method, RecordStatus, RunRecord};
pub use report::{cmd_report, cmd_score, SummaryRow};
pub use run::{cmd_run, RunOptions, RunStats};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Gen(#[from] TaskGenError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Csv { path: path.to_path_buf(), message: err.to_string() }
    }
}

pub fn config_echo_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

pub fn write_config_echo<T: Serialize + ?Sized>(path: &Path, config: &T) -> Result<(), HarnessError> {
    let echo = config_echo_path(path);
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    std::fs::write(&echo, text + "\n").map_err(|e| HarnessError::io(&echo, e))
}
