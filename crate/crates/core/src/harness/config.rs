use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::record::Method;
use super::HarnessError;
use crate::engine::EngineConfig;
use crate::evaluator::ScoreMode;
use crate::retriever::{MockParams, RetrieverKind, RetrieverSpec, TemplateId};
use crate::taskgen::{NiahConfig, StarsConfig, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    MqNiah(NiahConfig),
    CountingStars(StarsConfig),
    /// A LongBench-format JSONL file; `name` labels the dataset in reports.
    Longbench {
        path: PathBuf,
        #[serde(default)]
        name: Option<String>,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::MqNiah(_) => TaskKind::MqNiah,
            TaskSpec::CountingStars(_) => TaskKind::CountingStars,
            TaskSpec::Longbench { .. } => TaskKind::LongBenchQa,
        }
    }

    pub fn label(&self) -> String {
        match self {
            TaskSpec::MqNiah(c) => c.label(),
            TaskSpec::CountingStars(c) => c.label(),
            TaskSpec::Longbench { path, name } => name.clone().unwrap_or_else(|| {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "longbench".into())
            }),
        }
    }

    /// Parses labels such as `K1V10Q1@4K` or `N32@16K`; a bare number after
    /// `@` is a token count.
    pub fn from_label(label: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::Config(format!("unrecognised task label {label:?}"));
        let (shape, size) = label.split_once('@').ok_or_else(bad)?;
        let tokens = match size.strip_suffix(['K', 'k']) {
            Some(k) => k.parse::<usize>().map(|k| k * 1024),
            None => size.parse(),
        }
        .map_err(|_| bad())?;
        let nums: Vec<usize> = shape
            .split(|c: char| c.is_ascii_alphabetic())
            .skip(1)
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let letters: String = shape.chars().filter(char::is_ascii_alphabetic).collect();
        match (letters.as_str(), nums.as_slice()) {
            ("KVQ", &[x, y, z]) => Ok(TaskSpec::MqNiah(NiahConfig::new(x, y, z, tokens))),
            ("N", &[n]) => Ok(TaskSpec::CountingStars(StarsConfig::new(n, tokens))),
            _ => Err(bad()),
        }
    }

    /// Retrieval template that matches the task.
    pub fn default_template(&self) -> TemplateId {
        match self {
            TaskSpec::MqNiah(_) => TemplateId::RulerMagicNumbers,
            TaskSpec::CountingStars(_) => TemplateId::CountingStars,
            TaskSpec::Longbench { .. } => TemplateId::GenericQaRetrieval,
        }
    }
}

/// How LongBench QA samples are processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    /// Score the retrieved facts themselves against the answers.
    #[default]
    RetrieveFacts,
    /// Feed the retrieved facts to an answer call and score the answer.
    RetrieveThenAnswer,
    /// Answer from the full context in one call, without retrieval.
    DirectAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub seed: u64,
    pub samples: usize,
    pub retriever: RetrieverSpec,
    pub engine: EngineConfig,
    pub method: Method,
    pub sweep: Vec<u32>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub qa_mode: QaMode,
    /// Overrides the LongBench answer prompt; placeholders `{context}`
    /// and `{input}`.
    pub answer_prompt: Option<String>,
    pub score_mode: ScoreMode,
    /// Keep raw backend outputs in records.
    pub keep_raw: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::MqNiah(NiahConfig::new(1, 10, 1, 4096)),
            seed: 7,
            samples: 50,
            retriever: RetrieverSpec::mock(TemplateId::RulerMagicNumbers, MockParams::exact(3)),
            engine: EngineConfig::default(),
            method: Method::Fact,
            sweep: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            workers: 1,
            qa_mode: QaMode::default(),
            answer_prompt: None,
            score_mode: ScoreMode::default(),
            keep_raw: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, HarnessError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Sweep after applying the method: baseline always runs a single round.
    pub fn effective_sweep(&self) -> Vec<u32> {
        match self.method {
            Method::Baseline => vec![1],
            Method::Fact => self.sweep.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.sweep.is_empty() {
            return err("sweep must list at least one iteration count".into());
        }
        if self.sweep.contains(&0) {
            return err("sweep values must be >= 1".into());
        }
        if self.sweep.windows(2).any(|w| w[0] >= w[1]) {
            return err(format!("sweep must be strictly increasing, got {:?}", self.sweep));
        }
        if self.workers == 0 {
            return err("workers must be >= 1".into());
        }
        self.retriever.validate().map_err(HarnessError::Config)?;
        if self.retriever.kind == RetrieverKind::Mock
            && self.task.kind() == TaskKind::LongBenchQa
            && self.qa_mode != QaMode::RetrieveFacts
        {
            return err("answer modes need the http retriever".into());
        }
        Ok(())
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"task": {"kind": "counting_stars", "n_stars": 32, "context_tokens": 4096}, "samples": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.samples, 3);
        assert_eq!(cfg.sweep, [1, 2, 3, 4, 5]);
        assert_eq!(cfg.task.label(), "N32@4K");
        assert_eq!(cfg.task.default_template(), TemplateId::CountingStars);
    }

    #[test]
    fn labels_parse_back() {
        for label in ["K1V10Q1@4K", "K5V10Q1@16K", "N32@4K", "N8@2000"] {
            assert_eq!(TaskSpec::from_label(label).unwrap().label(), label);
        }
        for bad in ["K1V10@4K", "X1@4K", "N32", "N32@xK", "K1V1Q1Z1@4K"] {
            assert!(TaskSpec::from_label(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn baseline_forces_single_round() {
        let cfg = ExperimentConfig { method: Method::Baseline, ..ExperimentConfig::default() };
        assert_eq!(cfg.effective_sweep(), [1]);
    }

    #[test]
    fn sweep_validation() {
        let bad = ExperimentConfig { sweep: vec![1, 3, 2], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { sweep: vec![], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn roundtrip() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_pretty_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
