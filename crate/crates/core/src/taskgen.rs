//! Seeded generators for multi-fact needle-in-a-haystack benchmarks.
//!
//! Two task families are produced:
//!
//! * multi-key/value magic numbers (`K{x}V{y}Q{z}`): `x` keys with `y`
//!   seven-digit values each, one needle sentence per value;
//! * Counting Stars (`N{y}`): `y` sentences "The little penguin counted k ★"
//!   alternating with filler segments.
//!
//! Context budgets are given in tokens and converted to characters at a
//! fixed ratio (4 by default). Generated contexts hit the character budget
//! exactly.

use std::collections::HashSet;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filler;
use crate::retriever::prompt::COUNTING_STARS_INSTRUCTION;

pub const DEFAULT_CHARS_PER_TOKEN: usize = 4;
pub const STARS_MAX: u32 = 127;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    MqNiah,
    CountingStars,
    LongBenchQa,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::MqNiah => "MqNiah",
            TaskKind::CountingStars => "CountingStars",
            TaskKind::LongBenchQa => "LongBenchQa",
        })
    }
}

/// One benchmark sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_kind: TaskKind,
    pub context: String,
    pub query: String,
    /// Full needle sentences in context order.
    pub gold_facts: Vec<String>,
    /// Bare values, aligned with `gold_facts`.
    pub gold_values: Vec<String>,
    pub seed: u64,
    pub target_len_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NiahConfig {
    pub x_keys: usize,
    pub y_values: usize,
    #[serde(default = "one")]
    pub z_queries: usize,
    pub context_tokens: usize,
    #[serde(default = "default_cpt")]
    pub chars_per_token: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarsConfig {
    pub n_stars: usize,
    pub context_tokens: usize,
    #[serde(default = "default_cpt")]
    pub chars_per_token: usize,
}

fn one() -> usize {
    1
}

fn default_cpt() -> usize {
    DEFAULT_CHARS_PER_TOKEN
}

impl NiahConfig {
    pub fn new(x_keys: usize, y_values: usize, z_queries: usize, context_tokens: usize) -> Self {
        Self { x_keys, y_values, z_queries, context_tokens, chars_per_token: DEFAULT_CHARS_PER_TOKEN }
    }

    /// Short label such as `K1V10Q1@4K`.
    pub fn label(&self) -> String {
        format!("K{}V{}Q{}@{}", self.x_keys, self.y_values, self.z_queries, tokens_label(self.context_tokens))
    }

    pub fn target_len_chars(&self) -> usize {
        self.context_tokens * self.chars_per_token
    }
}

impl StarsConfig {
    pub fn new(n_stars: usize, context_tokens: usize) -> Self {
        Self { n_stars, context_tokens, chars_per_token: DEFAULT_CHARS_PER_TOKEN }
    }

    pub fn label(&self) -> String {
        format!("N{}@{}", self.n_stars, tokens_label(self.context_tokens))
    }

    pub fn target_len_chars(&self) -> usize {
        self.context_tokens * self.chars_per_token
    }
}

fn tokens_label(tokens: usize) -> String {
    if tokens >= 1024 && tokens.is_multiple_of(1024) {
        format!("{}K", tokens / 1024)
    } else {
        tokens.to_string()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskGenError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

pub fn niah_needle(key: &str, value: &str) -> String {
    format!("One of the special magic numbers for {key} is: {value}.")
}

pub fn star_sentence(count: impl fmt::Display) -> String {
    format!("The little penguin counted {count} ★")
}

/// Deterministic filler prose of exactly `target_len_chars` characters.
pub fn make_haystack(target_len_chars: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    filler::text(&mut rng, target_len_chars)
}

fn uuid_like<R: Rng + ?Sized>(rng: &mut R, digit_run: &Regex) -> String {
    const HEX: &[u8] = b"0123456789abcdef";
    loop {
        let key: String = [8usize, 4, 4, 4, 12]
            .iter()
            .map(|&n| (0..n).map(|_| HEX[rng.random_range(0..16)] as char).collect::<String>())
            .collect::<Vec<_>>()
            .join("-");
        // Keys must not carry anything that reads as a magic number.
        if !digit_run.is_match(&key) {
            return key;
        }
    }
}

fn enumerate_keys(keys: &[String]) -> String {
    match keys {
        [] => String::new(),
        [only] => only.clone(),
        [rest @ .., last] => format!("{}, and {}", rest.join(", "), last),
    }
}

/// Byte offsets in `haystack` where a sentence starts.
fn sentence_starts(haystack: &str) -> Vec<usize> {
    let mut starts = vec![0];
    starts.extend(haystack.match_indices(". ").map(|(i, _)| i + 2));
    starts.retain(|&i| i < haystack.len());
    starts
}

/// Multi-key/value magic-number instance.
pub fn gen_mq_niah(cfg: &NiahConfig, seed: u64) -> Result<TaskInstance, TaskGenError> {
    if cfg.x_keys == 0 || cfg.y_values == 0 || cfg.z_queries == 0 || cfg.chars_per_token == 0 {
        return Err(TaskGenError::Config("x_keys, y_values, z_queries and chars_per_token must be >= 1".into()));
    }
    let total_needles = cfg.x_keys * cfg.y_values;
    if total_needles > 9_000_000 {
        return Err(TaskGenError::Config("too many distinct seven-digit values requested".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let digit_run = Regex::new(r"\d{6,}").expect("static regex");

    let mut seen = HashSet::new();
    let mut keys = Vec::with_capacity(cfg.x_keys);
    while keys.len() < cfg.x_keys {
        let key = uuid_like(&mut rng, &digit_run);
        if seen.insert(key.clone()) {
            keys.push(key);
        }
    }
    let mut used = HashSet::new();
    let mut needles = Vec::with_capacity(total_needles);
    for key in &keys {
        for _ in 0..cfg.y_values {
            let value = loop {
                let v: u32 = rng.random_range(1_000_000..10_000_000);
                if used.insert(v) {
                    break v.to_string();
                }
            };
            needles.push((niah_needle(key, &value), value));
        }
    }
    needles.shuffle(&mut rng);

    let target = cfg.target_len_chars();
    let needle_chars: usize = needles.iter().map(|(n, _)| n.len() + 1).sum();
    if needle_chars * 2 > target {
        return Err(TaskGenError::Config(format!(
            "{total_needles} needles need {needle_chars} chars, more than half of the {target}-char budget"
        )));
    }
    let haystack = make_haystack(target - needle_chars, rng.random());
    let starts = sentence_starts(&haystack);
    if starts.len() < total_needles {
        return Err(TaskGenError::Config(format!(
            "haystack has {} sentence boundaries for {total_needles} needles",
            starts.len()
        )));
    }
    let mut picked: Vec<usize> =
        index::sample(&mut rng, starts.len(), total_needles).into_iter().map(|i| starts[i]).collect();
    picked.sort_unstable();

    let mut context = String::with_capacity(target);
    let mut cursor = 0;
    for (pos, (needle, _)) in picked.iter().zip(&needles) {
        context.push_str(&haystack[cursor..*pos]);
        context.push_str(needle);
        context.push(' ');
        cursor = *pos;
    }
    context.push_str(&haystack[cursor..]);

    let (gold_facts, gold_values) = needles.into_iter().unzip();
    Ok(TaskInstance {
        task_kind: TaskKind::MqNiah,
        context,
        query: enumerate_keys(&keys),
        gold_facts,
        gold_values,
        seed,
        target_len_chars: target,
    })
}

/// Counting Stars instance: filler segments, each followed by a star line.
pub fn gen_counting_stars(cfg: &StarsConfig, seed: u64) -> Result<TaskInstance, TaskGenError> {
    if cfg.n_stars == 0 || cfg.n_stars > STARS_MAX as usize {
        return Err(TaskGenError::Config(format!("n_stars must be within 1..={STARS_MAX}")));
    }
    if cfg.chars_per_token == 0 {
        return Err(TaskGenError::Config("chars_per_token must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: Vec<u32> =
        index::sample(&mut rng, STARS_MAX as usize, cfg.n_stars).into_iter().map(|i| i as u32 + 1).collect();
    counts.shuffle(&mut rng);
    let lines: Vec<String> = counts.iter().map(star_sentence).collect();

    let target = cfg.target_len_chars();
    let star_chars: usize = lines.iter().map(|l| l.chars().count() + 2).sum();
    if star_chars * 2 > target {
        return Err(TaskGenError::Config(format!(
            "{} star sentences need {star_chars} chars, more than half of the {target}-char budget",
            cfg.n_stars
        )));
    }
    let filler_total = target - star_chars;
    let base = filler_total / cfg.n_stars;
    let extra = filler_total % cfg.n_stars;
    let mut haystack_rng = ChaCha8Rng::seed_from_u64(rng.random());

    let mut context = String::with_capacity(target + 2 * cfg.n_stars);
    for (i, line) in lines.iter().enumerate() {
        let seg_len = base + usize::from(i < extra);
        context.push_str(&filler::text(&mut haystack_rng, seg_len));
        context.push('\n');
        context.push_str(line);
        context.push('\n');
    }

    Ok(TaskInstance {
        task_kind: TaskKind::CountingStars,
        context,
        query: COUNTING_STARS_INSTRUCTION.to_string(),
        gold_values: counts.iter().map(u32::to_string).collect(),
        gold_facts: lines,
        seed,
        target_len_chars: target,
    })
}
