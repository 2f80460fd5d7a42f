//! Scoring: multiset retrieval recall/precision and SQuAD-style token F1,
//! plus grouping of run records into summaries.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::harness::record::{Method, RunRecord};
use crate::rewriter::normalize_text;
use crate::taskgen::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub recall: f64,
    pub precision: f64,
    pub matched: usize,
    pub gold_total: usize,
    pub predicted_total: usize,
}

/// Greedy multiset match under `normalize_text` equality.
pub fn score_retrieval<P: AsRef<str>, G: AsRef<str>>(predicted: &[P], gold: &[G]) -> RetrievalScore {
    let mut remaining: HashMap<String, usize> = HashMap::new();
    for g in gold {
        *remaining.entry(normalize_text(g.as_ref())).or_default() += 1;
    }
    let mut matched = 0;
    for p in predicted {
        if let Some(count) = remaining.get_mut(&normalize_text(p.as_ref())) {
            if *count > 0 {
                *count -= 1;
                matched += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    RetrievalScore {
        recall: ratio(matched, gold.len()),
        precision: ratio(matched, predicted.len()),
        matched,
        gold_total: gold.len(),
        predicted_total: predicted.len(),
    }
}

/// Lowercase, drop ASCII punctuation and the articles a/an/the, then split
/// on whitespace.
pub fn answer_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).map(str::to_string).collect()
}

fn f1_single(prediction: &[String], gold: &[String]) -> f64 {
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *bag.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in prediction {
        if let Some(c) = bag.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / prediction.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token-overlap F1 of `prediction` against any of `gold_answers`.
pub fn token_f1<G: AsRef<str>>(prediction: &str, gold_answers: &[G]) -> f64 {
    let pred = answer_tokens(prediction);
    gold_answers.iter().map(|g| f1_single(&pred, &answer_tokens(g.as_ref()))).fold(0.0, f64::max)
}

/// Compensated sum; keeps means of repeated decimals like 0.3 exact.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        stable_sum(values.iter().copied()) / values.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Task,
    Model,
    Method,
    Iterations,
}

impl GroupKey {
    pub const ALL: [GroupKey; 4] = [GroupKey::Task, GroupKey::Model, GroupKey::Method, GroupKey::Iterations];
}

/// Per-sample mean of the primary score, or recall pooled over all gold
/// items of the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    PerSample,
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task_kind: TaskKind,
    pub task_label: Option<String>,
    pub model_id: Option<String>,
    pub method: Option<Method>,
    pub n_iterations: Option<u32>,
    pub mean_score: f64,
    pub samples: usize,
    pub failed: usize,
    /// Sample ids of the grouped records, sorted.
    pub per_sample: Vec<String>,
}

type Key = (Option<String>, Option<String>, Option<Method>, Option<u32>);

/// Groups records by the selected keys; output is sorted by group key.
pub fn aggregate(records: &[RunRecord], group_by: &[GroupKey], mode: ScoreMode) -> Vec<RunSummary> {
    let has = |k: GroupKey| group_by.contains(&k);
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (
            has(GroupKey::Task).then(|| r.task_label.clone()),
            has(GroupKey::Model).then(|| r.model_id.clone()),
            has(GroupKey::Method).then_some(r.method),
            has(GroupKey::Iterations).then_some(r.n_iterations),
        );
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task_label, model_id, method, n_iterations), members)| {
            let mean_score = match mode {
                ScoreMode::PerSample => mean(&members.iter().map(|r| r.scores.primary).collect::<Vec<_>>()),
                ScoreMode::Pooled => pooled(&members),
            };
            let mut per_sample: Vec<String> = members.iter().map(|r| r.sample_id.clone()).collect();
            per_sample.sort();
            RunSummary {
                task_kind: members[0].task_kind,
                task_label,
                model_id,
                method,
                n_iterations,
                mean_score,
                samples: members.len(),
                failed: members.iter().filter(|r| r.is_failed()).count(),
                per_sample,
            }
        })
        .collect()
}

fn pooled(members: &[&RunRecord]) -> f64 {
    let (matched, gold) =
        members.iter().fold((0usize, 0usize), |(m, g), r| match (r.scores.matched, r.scores.gold_total) {
            (Some(rm), Some(rg)) => (m + rm, g + rg),
            _ => (m, g),
        });
    if gold == 0 {
        mean(&members.iter().map(|r| r.scores.primary).collect::<Vec<_>>())
    } else {
        matched as f64 / gold as f64
    }
}
