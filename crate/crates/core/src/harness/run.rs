//! Runs samples × sweep points through the engine and appends records.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use regex::Regex;

use super::config::{ExperimentConfig, QaMode};
use super::dataset::{load_samples, read_jsonl, WorkSample};
use super::record::{FailureKind, Method, RecordError, RecordStatus, RunRecord, Scores};
use super::{write_config_echo, HarnessError};
use crate::engine::{run_fact, EngineConfig, EngineError, FactResult};
use crate::evaluator::{score_retrieval, token_f1};
use crate::retriever::prompt::{render, LONGBENCH_ANSWER};
use crate::retriever::{HttpRetriever, RetrieveError, Retriever, RetrieverKind};
use crate::taskgen::TaskKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub resume: bool,
    /// Required before any call to a live HTTP backend.
    pub live: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunStats {
    pub path: PathBuf,
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// The value a fact string contributes to retrieval scoring.
pub fn extract_value(kind: TaskKind, fact: &str) -> String {
    static DIGITS: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    static COUNTED: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    match kind {
        TaskKind::MqNiah => DIGITS
            .get_or_init(|| Regex::new(r"\d{6,}").expect("static regex"))
            .find_iter(fact)
            .last()
            .map_or_else(|| fact.to_string(), |m| m.as_str().to_string()),
        TaskKind::CountingStars => COUNTED
            .get_or_init(|| Regex::new(r"counted\s+(\d+)|(\d+)").expect("static regex"))
            .captures(fact)
            .and_then(|c| c.get(1).or_else(|| c.get(2)))
            .map_or_else(|| fact.to_string(), |m| m.as_str().to_string()),
        TaskKind::LongBenchQa => fact.to_string(),
    }
}

fn record_error(err: &RetrieveError) -> RecordError {
    let (kind, raw) = match err {
        RetrieveError::Backend { .. } => (FailureKind::Backend, None),
        RetrieveError::Parse { raw, .. } => (FailureKind::Parse, Some(raw.clone())),
    };
    RecordError { kind, message: err.to_string(), raw }
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    retriever: &'a dyn Retriever,
    answerer: Option<&'a HttpRetriever>,
    model_id: &'a str,
    task_label: &'a str,
}

impl Job<'_> {
    fn process(&self, sample: &WorkSample, n: u32) -> RunRecord {
        let started = Instant::now();
        let mut rec = RunRecord::skeleton(
            &sample.sample_id,
            sample.task_kind,
            self.task_label,
            self.model_id,
            self.cfg.method,
            n,
        );
        rec.gold = sample.gold.clone();
        let qa = sample.task_kind == TaskKind::LongBenchQa;

        if qa && self.cfg.qa_mode == QaMode::DirectAnswer {
            self.answer(&mut rec, &sample.query, &sample.context);
        } else {
            let engine = EngineConfig { n, ..self.cfg.engine.clone() };
            match run_fact(&sample.query, &sample.context, &engine, self.retriever) {
                Ok(result) => self.absorb(&mut rec, result),
                Err(EngineError::Retrieval { source, partial }) => {
                    self.absorb(&mut rec, *partial);
                    if let RetrieveError::Parse { raw, .. } = &source {
                        rec.raw_responses.push(raw.clone());
                    }
                    rec.stop_reason = None;
                    self.fail(&mut rec, record_error(&source));
                }
                Err(other) => self
                    .fail(&mut rec, RecordError { kind: FailureKind::Config, message: other.to_string(), raw: None }),
            }
            if qa && self.cfg.qa_mode == QaMode::RetrieveThenAnswer && !rec.is_failed() {
                let facts = rec.predictions.join("\n");
                self.answer(&mut rec, &sample.query, &facts);
            }
        }
        if !self.cfg.keep_raw {
            rec.raw_responses.clear();
        }
        score(&mut rec);
        rec.wall_ms = started.elapsed().as_millis() as u64;
        rec
    }

    fn absorb(&self, rec: &mut RunRecord, result: FactResult) {
        rec.predictions = result.facts.into_iter().map(|f| f.text).collect();
        rec.stop_reason = Some(result.stop_reason);
        rec.iterations_run = result.iterations_run;
        rec.trace = result.trace;
        rec.raw_responses = result.raw_responses;
    }

    fn fail(&self, rec: &mut RunRecord, error: RecordError) {
        rec.status = RecordStatus::Failed;
        rec.error = Some(error);
    }

    fn answer(&self, rec: &mut RunRecord, question: &str, context: &str) {
        let Some(answerer) = self.answerer else {
            let message = "answer step needs the http retriever".to_string();
            return self.fail(rec, RecordError { kind: FailureKind::Config, message, raw: None });
        };
        let body = self.cfg.answer_prompt.as_deref().unwrap_or(LONGBENCH_ANSWER);
        let vars = BTreeMap::from([("context", context), ("input", question), ("question", question)]);
        let prompt = match render(body, &vars) {
            Ok(p) => p,
            Err(e) => {
                return self.fail(rec, RecordError { kind: FailureKind::Config, message: e.to_string(), raw: None })
            }
        };
        match answerer.complete(&prompt) {
            Ok(done) => {
                rec.raw_responses.push(done.content.clone());
                rec.answer = Some(done.content.trim().to_string());
            }
            Err(e) => self.fail(rec, record_error(&e)),
        }
    }
}

/// Fills `predicted_values` and `scores` from predictions and gold.
pub fn score(rec: &mut RunRecord) {
    match rec.task_kind {
        TaskKind::LongBenchQa => {
            let text = rec.answer.clone().unwrap_or_else(|| rec.predictions.join(" "));
            let f1 = if rec.gold.is_empty() { 0.0 } else { token_f1(&text, &rec.gold) };
            rec.predicted_values = vec![text];
            rec.scores = Scores { primary: f1, f1: Some(f1), ..Scores::default() };
        }
        kind => {
            rec.predicted_values = rec.predictions.iter().map(|p| extract_value(kind, p)).collect();
            let s = score_retrieval(&rec.predicted_values, &rec.gold);
            rec.scores = Scores {
                primary: s.recall,
                recall: Some(s.recall),
                precision: Some(s.precision),
                matched: Some(s.matched),
                gold_total: Some(s.gold_total),
                predicted_total: Some(s.predicted_total),
                f1: None,
            };
        }
    }
}

/// Cuts a trailing partial line left by an interrupted run.
fn repair_tail(path: &Path) -> Result<(), HarnessError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| HarnessError::io(path, e))?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new().write(true).open(path).map_err(|e| HarnessError::io(path, e))?;
    file.set_len(keep as u64).map_err(|e| HarnessError::io(path, e))
}

/// Keys of records already present, for `--resume`.
pub fn completed_keys(path: &Path) -> Result<HashSet<(String, Method, u32)>, HarnessError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    repair_tail(path)?;
    let records: Vec<RunRecord> = read_jsonl(path)?;
    Ok(records.iter().map(RunRecord::key).collect())
}

/// Upper bound on backend calls for the pending work.
pub fn estimate_calls(cfg: &ExperimentConfig, pending: &[(usize, u32)]) -> u64 {
    let qa = cfg.task.kind() == TaskKind::LongBenchQa;
    pending
        .iter()
        .map(|&(_, n)| match (qa, cfg.qa_mode) {
            (true, QaMode::DirectAnswer) => 1,
            (true, QaMode::RetrieveThenAnswer) => u64::from(n) + 1,
            _ => u64::from(n),
        })
        .sum()
}

pub fn cmd_run(
    cfg: &ExperimentConfig,
    dataset: &Path,
    records: &Path,
    opts: RunOptions,
) -> Result<RunStats, HarnessError> {
    cfg.validate()?;
    let samples = load_samples(cfg, dataset)?;
    let http = cfg.retriever.kind == RetrieverKind::Http;
    if http && !opts.live {
        return Err(HarnessError::Config("the http retriever only runs with --live".into()));
    }

    let done = if opts.resume { completed_keys(records)? } else { HashSet::new() };
    let sweep = match (cfg.task.kind(), cfg.qa_mode) {
        (TaskKind::LongBenchQa, QaMode::DirectAnswer) => vec![0],
        _ => cfg.effective_sweep(),
    };
    let mut pending = Vec::new();
    let mut skipped = 0;
    for (i, sample) in samples.iter().enumerate() {
        for &n in &sweep {
            if done.contains(&(sample.sample_id.clone(), cfg.method, n)) {
                skipped += 1;
            } else {
                pending.push((i, n));
            }
        }
    }
    if http {
        eprintln!(
            "about to make up to {} backend call(s) to {}",
            estimate_calls(cfg, &pending),
            cfg.retriever.http.model
        );
    }

    let retriever = cfg.retriever.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    let answerer = if http && cfg.task.kind() == TaskKind::LongBenchQa && cfg.qa_mode != QaMode::RetrieveFacts {
        let r =
            HttpRetriever::new(cfg.retriever.http.clone(), cfg.retriever.template_id, cfg.retriever.decoding.clone())
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        Some(r)
    } else {
        None
    };

    if let Some(dir) = records.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(opts.resume)
        .truncate(!opts.resume)
        .open(records)
        .map_err(|e| HarnessError::io(records, e))?;
    let mut out = BufWriter::new(file);
    // The echo reports the samples actually loaded, not the generator setting.
    write_config_echo(records, &ExperimentConfig { samples: samples.len(), ..cfg.clone() })?;

    let model_id = cfg.retriever.model_id();
    let task_label = cfg.task.label();
    let job = Job {
        cfg,
        retriever: retriever.as_ref(),
        answerer: answerer.as_ref(),
        model_id: &model_id,
        task_label: &task_label,
    };
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.clamp(1, pending.len().max(1));
    let (tx, rx) = mpsc::channel::<RunRecord>();

    let mut written = 0;
    let mut failed = 0;
    let mut io_error = None;
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (job, pending, samples, next) = (&job, &pending, &samples, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(sample, n)) = pending.get(i) else { break };
                if tx.send(job.process(&samples[sample], n)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for rec in rx {
            let line = serde_json::to_string(&rec).expect("record serializes");
            let res = out.write_all(line.as_bytes()).and_then(|_| out.write_all(b"\n")).and_then(|_| out.flush());
            if let Err(e) = res {
                io_error = Some(HarnessError::io(records, e));
                // Stop the workers: they exit on their next send.
                next.store(usize::MAX / 2, Ordering::Relaxed);
                break;
            }
            written += 1;
            failed += usize::from(rec.is_failed());
        }
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    Ok(RunStats { path: records.to_path_buf(), written, skipped, failed })
}
