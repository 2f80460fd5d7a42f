//! Locating fact strings inside a context and rewriting them out of it.
//!
//! Spans are byte offsets into a UTF-8 string and always fall on character
//! boundaries. Matching is two-tiered: exact substring occurrences first,
//! then a normalized containment test over sentences when the exact form is
//! absent (retrievers tend to restate facts with light changes in case or
//! punctuation).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filler;

/// Half-open byte range `[start, end)` into a context string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteKind {
    #[default]
    Remove,
    ReplaceWithNoise,
}

/// How located spans are taken out of the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RewriteStrategy {
    #[serde(default)]
    pub kind: RewriteKind,
    /// Seed for the filler generator; only read by `ReplaceWithNoise`.
    #[serde(default)]
    pub noise_seed: u64,
}

impl RewriteStrategy {
    pub fn remove() -> Self {
        Self { kind: RewriteKind::Remove, noise_seed: 0 }
    }

    pub fn replace_with_noise(noise_seed: u64) -> Self {
        Self { kind: RewriteKind::ReplaceWithNoise, noise_seed }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewriteError {
    #[error("invalid span {span} for context of {len} bytes: {reason}")]
    InvalidSpan { span: Span, len: usize, reason: &'static str },
}

/// Canonical form used for deduplication and tier-2 matching.
pub fn normalize_text(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut rest = collapsed.as_str();
    loop {
        let next = rest.trim_start().trim_start_matches(['-', '*', '•']).trim_start();
        if next.len() == rest.len() {
            break;
        }
        rest = next;
    }
    loop {
        let next = rest.trim_end().trim_end_matches(['.', '!', '?']).trim_end();
        if next.len() == rest.len() {
            break;
        }
        rest = next;
    }
    rest.to_string()
}

/// Sentence spans of `text`, trimmed of surrounding whitespace.
///
/// A sentence ends at `.`, `!` or `?` followed by whitespace (or end of
/// text), or at a newline.
pub fn sentence_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let end = match c {
            '\n' => Some(i),
            '.' | '!' | '?' => match iter.peek() {
                None => Some(i + c.len_utf8()),
                Some(&(_, next)) if next.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            _ => None,
        };
        if let Some(end) = end {
            if let Some(s) = start.take() {
                push_trimmed(text, s, end, &mut spans);
            }
        }
    }
    if let Some(s) = start {
        push_trimmed(text, s, text.len(), &mut spans);
    }
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<Span>) {
    let end = start + text[start..end].trim_end().len();
    if end > start {
        out.push(Span::new(start, end));
    }
}

/// Finds `fact` in `context`.
///
/// Tier 1 returns every non-overlapping exact occurrence, left to right.
/// Tier 2 (only when tier 1 finds nothing) returns each sentence whose
/// normalized text contains the normalized fact. An empty result means the
/// fact cannot be located.
pub fn locate(fact: &str, context: &str) -> Vec<Span> {
    if fact.is_empty() {
        return Vec::new();
    }
    let exact: Vec<Span> = context.match_indices(fact).map(|(i, m)| Span::new(i, i + m.len())).collect();
    if !exact.is_empty() {
        return exact;
    }
    let needle = normalize_text(fact);
    if needle.is_empty() {
        return Vec::new();
    }
    sentence_spans(context).into_iter().filter(|s| normalize_text(&context[s.start..s.end]).contains(&needle)).collect()
}

/// Sorts spans and merges the ones that overlap.
pub fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.retain(|s| !s.is_empty());
    spans.sort();
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(last) if last.end > span.start => last.end = last.end.max(span.end),
            _ => merged.push(span),
        }
    }
    merged
}

/// Widens each span to cover the sentence(s) it touches, then merges.
pub fn expand_to_sentences(context: &str, spans: &[Span]) -> Vec<Span> {
    if spans.is_empty() {
        return Vec::new();
    }
    let sentences = sentence_spans(context);
    let widened = spans.iter().map(|span| {
        let mut out = *span;
        for s in sentences.iter().filter(|s| s.overlaps(span)) {
            out.start = out.start.min(s.start);
            out.end = out.end.max(s.end);
        }
        out
    });
    merge_spans(widened.collect())
}

fn validate(context: &str, spans: &[Span]) -> Result<Vec<Span>, RewriteError> {
    let len = context.len();
    let invalid = |span: Span, reason| RewriteError::InvalidSpan { span, len, reason };
    let mut sorted = spans.to_vec();
    sorted.sort();
    for span in &sorted {
        if span.start >= span.end {
            return Err(invalid(*span, "empty or reversed"));
        }
        if span.end > len {
            return Err(invalid(*span, "out of bounds"));
        }
        if !context.is_char_boundary(span.start) || !context.is_char_boundary(span.end) {
            return Err(invalid(*span, "not on a character boundary"));
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].end > pair[1].start {
            return Err(invalid(pair[1], "overlaps another span"));
        }
    }
    Ok(sorted)
}

/// Produces a new context with `spans` removed or replaced by filler.
///
/// Removal works right to left; when a deletion leaves whitespace on both
/// sides, the two runs collapse into a single space. Replacement fills each
/// span with neutral filler of the same character count, seeded from the
/// strategy.
pub fn rewrite(context: &str, spans: &[Span], strategy: RewriteStrategy) -> Result<String, RewriteError> {
    let sorted = validate(context, spans)?;
    if sorted.is_empty() {
        return Ok(context.to_string());
    }
    match strategy.kind {
        RewriteKind::Remove => {
            let mut out = context.to_string();
            for span in sorted.iter().rev() {
                out.replace_range(span.start..span.end, "");
                let at = span.start;
                let left = out[..at].trim_end().len();
                let right = out.len() - out[at..].trim_start().len();
                if left < at && right > at {
                    out.replace_range(left..right, " ");
                }
            }
            Ok(out)
        }
        RewriteKind::ReplaceWithNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(strategy.noise_seed);
            let mut out = String::with_capacity(context.len());
            let mut cursor = 0;
            for span in &sorted {
                out.push_str(&context[cursor..span.start]);
                let chars = context[span.start..span.end].chars().count();
                out.push_str(&filler::text(&mut rng, chars));
                cursor = span.end;
            }
            out.push_str(&context[cursor..]);
            Ok(out)
        }
    }
}
