//! Dataset files: generated task instances and LongBench-format QA.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{ExperimentConfig, TaskSpec};
use super::{write_config_echo, HarnessError};
use crate::taskgen::{gen_counting_stars, gen_mq_niah, TaskInstance, TaskKind};

/// Seed of the `index`-th generated sample.
pub fn sample_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenReport {
    pub path: PathBuf,
    pub count: usize,
    pub mean_context_len: f64,
}

pub fn generate(cfg: &ExperimentConfig) -> Result<Vec<TaskInstance>, HarnessError> {
    (0..cfg.samples)
        .map(|i| {
            let seed = sample_seed(cfg.seed, i);
            match &cfg.task {
                TaskSpec::MqNiah(c) => gen_mq_niah(c, seed).map_err(HarnessError::from),
                TaskSpec::CountingStars(c) => gen_counting_stars(c, seed).map_err(HarnessError::from),
                TaskSpec::Longbench { .. } => {
                    Err(HarnessError::Config("longbench tasks are read from a file, not generated".into()))
                }
            }
        })
        .collect()
}

/// Writes `cfg.samples` generated instances to `out` as JSONL.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<GenReport, HarnessError> {
    let instances = generate(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(out).map_err(|e| HarnessError::io(out, e))?;
    let mut w = BufWriter::new(file);
    for inst in &instances {
        serde_json::to_writer(&mut w, inst).expect("instance serializes");
        w.write_all(b"\n").map_err(|e| HarnessError::io(out, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(out, e))?;
    write_config_echo(out, cfg)?;
    let total: usize = instances.iter().map(|i| i.context.chars().count()).sum();
    Ok(GenReport {
        path: out.to_path_buf(),
        count: instances.len(),
        mean_context_len: if instances.is_empty() { 0.0 } else { total as f64 / instances.len() as f64 },
    })
}

pub fn read_instances(path: &Path) -> Result<Vec<TaskInstance>, HarnessError> {
    read_jsonl(path)
}

/// Parses every non-empty line of a JSONL file; the first bad line aborts
/// with its 1-based line number.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSample {
    pub id: Option<String>,
    pub input: String,
    pub context: String,
    pub answers: Vec<String>,
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LongBenchLoad {
    pub samples: Vec<QaSample>,
    pub rejected: Vec<RejectedLine>,
}

fn qa_from_value(v: &Value) -> Result<QaSample, String> {
    let obj = v.as_object().ok_or("line is not a JSON object")?;
    let text = |key: &str| -> Result<String, String> {
        obj.get(key).and_then(Value::as_str).map(str::to_string).ok_or_else(|| format!("missing string field {key:?}"))
    };
    let answers = obj
        .get("answers")
        .and_then(Value::as_array)
        .ok_or("missing array field \"answers\"")?
        .iter()
        .map(|a| a.as_str().map(str::to_string).ok_or("non-string answer"))
        .collect::<Result<Vec<_>, _>>()?;
    if answers.is_empty() {
        return Err("\"answers\" is empty".into());
    }
    Ok(QaSample {
        id: obj.get("_id").and_then(Value::as_str).map(str::to_string),
        input: text("input")?,
        context: text("context")?,
        answers,
        dataset: obj.get("dataset").and_then(Value::as_str).map(str::to_string),
    })
}

/// Reads LongBench JSONL (`input`, `context`, `answers`). Malformed lines
/// are skipped and reported in `rejected`.
pub fn load_longbench_jsonl(path: &Path) -> Result<LongBenchLoad, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut load = LongBenchLoad::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line).map_err(|e| e.to_string()).and_then(|v| qa_from_value(&v));
        match parsed {
            Ok(sample) => load.samples.push(sample),
            Err(reason) => load.rejected.push(RejectedLine { line: i + 1, reason }),
        }
    }
    Ok(load)
}

/// A sample ready for the runner, whatever its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkSample {
    pub sample_id: String,
    pub task_kind: TaskKind,
    pub query: String,
    pub context: String,
    /// Gold values for retrieval tasks, reference answers for QA.
    pub gold: Vec<String>,
}

pub fn instance_sample_id(index: usize, inst: &TaskInstance) -> String {
    format!("s{index:05}-{}", inst.seed)
}

/// Loads the samples a run will process.
pub fn load_samples(cfg: &ExperimentConfig, dataset: &Path) -> Result<Vec<WorkSample>, HarnessError> {
    match &cfg.task {
        TaskSpec::Longbench { .. } => {
            let load = load_longbench_jsonl(dataset)?;
            if !load.rejected.is_empty() {
                eprintln!("skipped {} malformed line(s) in {}", load.rejected.len(), dataset.display());
            }
            Ok(load
                .samples
                .into_iter()
                .enumerate()
                .map(|(i, qa)| WorkSample {
                    sample_id: qa.id.unwrap_or_else(|| format!("q{i:05}")),
                    task_kind: TaskKind::LongBenchQa,
                    query: qa.input,
                    context: qa.context,
                    gold: qa.answers,
                })
                .collect())
        }
        _ => Ok(read_instances(dataset)?
            .into_iter()
            .enumerate()
            .map(|(i, inst)| WorkSample {
                sample_id: instance_sample_id(i, &inst),
                task_kind: inst.task_kind,
                query: inst.query,
                context: inst.context,
                gold: inst.gold_values,
            })
            .collect()),
    }
}
