use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{IterationTrace, StopReason};
use crate::taskgen::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    #[default]
    Fact,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Fact => "fact",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "fact" => Ok(Method::Fact),
            other => Err(format!("unknown method {other:?} (expected baseline or fact)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    #[default]
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Backend,
    Parse,
    Config,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub kind: FailureKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    /// Recall for retrieval tasks, token F1 for QA.
    pub primary: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_total: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_total: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
}

/// Output of one (sample, sweep point) run; one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: String,
    pub task_kind: TaskKind,
    pub task_label: String,
    pub model_id: String,
    pub method: Method,
    pub n_iterations: u32,
    #[serde(default)]
    pub status: RecordStatus,
    /// Aggregated fact texts in discovery order.
    pub predictions: Vec<String>,
    /// Values extracted from `predictions`, compared against `gold`.
    pub predicted_values: Vec<String>,
    pub gold: Vec<String>,
    pub scores: Scores,
    pub stop_reason: Option<StopReason>,
    pub iterations_run: u32,
    pub wall_ms: u64,
    pub trace: Vec<IterationTrace>,
    #[serde(default)]
    pub raw_responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RecordError>,
}

impl RunRecord {
    pub fn skeleton(
        sample_id: &str,
        task_kind: TaskKind,
        task_label: &str,
        model_id: &str,
        method: Method,
        n_iterations: u32,
    ) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            task_kind,
            task_label: task_label.to_string(),
            model_id: model_id.to_string(),
            method,
            n_iterations,
            status: RecordStatus::Ok,
            predictions: Vec::new(),
            predicted_values: Vec::new(),
            gold: Vec::new(),
            scores: Scores::default(),
            stop_reason: None,
            iterations_run: 0,
            wall_ms: 0,
            trace: Vec::new(),
            raw_responses: Vec::new(),
            answer: None,
            error: None,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == RecordStatus::Failed
    }

    /// Identity used by `--resume`.
    pub fn key(&self) -> (String, Method, u32) {
        (self.sample_id.clone(), self.method, self.n_iterations)
    }
}
