//! The iterative retrieve / rewrite / aggregate loop.
//!
//! Each round asks the retriever for candidate facts against the current
//! context, locates the candidates, rewrites the located spans out of the
//! context, and merges the located candidates into the running fact set.
//! The loop ends after `n` rounds or as soon as a round shows no progress.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retriever::{RetrieveError, RetrieveRequest, Retriever};
use crate::rewriter::{self, normalize_text, RewriteError, RewriteStrategy, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    MaxIterations,
    NoNewFacts,
    EmptyRetrieval,
    ContextExhausted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What gets rewritten once a candidate has been located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanScope {
    /// Only the matched text.
    Match,
    /// The whole sentence(s) containing the match.
    #[default]
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Maximum number of rounds.
    pub n: u32,
    pub rewrite_strategy: RewriteStrategy,
    /// The loop stops once the context is shorter than this many characters.
    pub min_context_chars: usize,
    /// Drop candidates that cannot be found in the context.
    pub drop_unlocated: bool,
    pub span_scope: SpanScope,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n: 5,
            rewrite_strategy: RewriteStrategy::remove(),
            min_context_chars: 0,
            drop_unlocated: true,
            span_scope: SpanScope::Sentence,
        }
    }
}

impl EngineConfig {
    pub fn with_n(n: u32) -> Self {
        Self { n, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n < 1 {
            return Err(EngineError::InvalidConfig("n must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCandidate {
    pub text: String,
    pub normalized: String,
    /// Spans in the context version the candidate was located in.
    pub spans: Vec<Span>,
    pub iteration: u32,
    pub located: bool,
}

impl FactCandidate {
    pub fn new(text: impl Into<String>, spans: Vec<Span>, iteration: u32) -> Self {
        let text = text.into();
        Self { normalized: normalize_text(&text), located: !spans.is_empty(), text, spans, iteration }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: u32,
    pub raw_candidates: Vec<String>,
    pub new_facts: usize,
    pub dropped_hallucinations: usize,
    pub context_len_before: usize,
    pub context_len_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactResult {
    /// Aggregated facts in discovery order.
    pub facts: Vec<FactCandidate>,
    pub iterations_run: u32,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationTrace>,
    /// Raw backend outputs, one per round that produced one.
    pub raw_responses: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("context is empty")]
    EmptyContext,
    #[error("retrieval failed in round {}: {source}", partial.iterations_run + 1)]
    Retrieval {
        #[source]
        source: RetrieveError,
        /// Everything found before the failing round.
        partial: Box<FactResult>,
    },
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

/// Appends the candidates of `new` whose normalized form is unseen.
pub fn dedup_and_merge(found: Vec<FactCandidate>, new: Vec<FactCandidate>) -> (Vec<FactCandidate>, usize) {
    let mut merged = found;
    let before = merged.len();
    for cand in new {
        if !merged.iter().any(|f| f.normalized == cand.normalized) {
            merged.push(cand);
        }
    }
    let added = merged.len() - before;
    (merged, added)
}

/// Early-stop check after a completed round.
///
/// A round whose only unseen candidates were unlocatable does not count as
/// "no new facts": the retriever spent its output on hallucinations and may
/// still surface real facts on the next call.
pub fn should_stop(
    _found: &[FactCandidate],
    current_context: &str,
    last: &IterationTrace,
    cfg: &EngineConfig,
) -> Option<StopReason> {
    if last.raw_candidates.is_empty() {
        Some(StopReason::EmptyRetrieval)
    } else if last.new_facts == 0 && last.dropped_hallucinations == 0 {
        Some(StopReason::NoNewFacts)
    } else if current_context.chars().count() < cfg.min_context_chars {
        Some(StopReason::ContextExhausted)
    } else {
        None
    }
}

/// Runs the loop for one query/context pair.
pub fn run_fact<R: Retriever + ?Sized>(
    query: &str,
    context: &str,
    cfg: &EngineConfig,
    retriever: &R,
) -> Result<FactResult, EngineError> {
    cfg.validate()?;
    if context.is_empty() {
        return Err(EngineError::EmptyContext);
    }
    let mut result = FactResult {
        facts: Vec::new(),
        iterations_run: 0,
        stop_reason: StopReason::MaxIterations,
        trace: Vec::new(),
        raw_responses: Vec::new(),
    };
    let mut ctx = context.to_string();

    for round in 1..=cfg.n {
        let retrieval = match retriever.retrieve(&RetrieveRequest { query, context: &ctx, round }) {
            Ok(r) => r,
            Err(source) => return Err(EngineError::Retrieval { source, partial: Box::new(result) }),
        };
        if let Some(raw) = retrieval.raw {
            result.raw_responses.push(raw);
        }

        let mut kept = Vec::with_capacity(retrieval.candidates.len());
        let mut to_rewrite = Vec::new();
        let mut dropped = 0;
        for text in &retrieval.candidates {
            let mut spans = rewriter::locate(text, &ctx);
            if cfg.span_scope == SpanScope::Sentence {
                spans = rewriter::expand_to_sentences(&ctx, &spans);
            }
            to_rewrite.extend_from_slice(&spans);
            let cand = FactCandidate::new(text.as_str(), spans, round);
            if cand.located || !cfg.drop_unlocated {
                kept.push(cand);
            } else if !result.facts.iter().any(|f| f.normalized == cand.normalized) {
                dropped += 1;
            }
        }

        let before = ctx.chars().count();
        ctx = rewriter::rewrite(&ctx, &rewriter::merge_spans(to_rewrite), cfg.rewrite_strategy)?;
        let (facts, new_facts) = dedup_and_merge(std::mem::take(&mut result.facts), kept);
        result.facts = facts;
        let trace = IterationTrace {
            iteration: round,
            raw_candidates: retrieval.candidates,
            new_facts,
            dropped_hallucinations: dropped,
            context_len_before: before,
            context_len_after: ctx.chars().count(),
        };
        result.iterations_run = round;
        let stop = should_stop(&result.facts, &ctx, &trace, cfg);
        result.trace.push(trace);
        if let Some(reason) = stop {
            result.stop_reason = reason;
            break;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::{MockParams, MockRetriever, Retrieval};
    use crate::rewriter::RewriteKind;
    use crate::taskgen::niah_needle;
    use std::sync::Mutex;

    fn cand(text: &str) -> FactCandidate {
        FactCandidate::new(text, vec![Span::new(0, 1)], 1)
    }

    fn ten_facts() -> (String, Vec<String>) {
        let facts: Vec<String> = (0..10).map(|i| niah_needle("k1", &format!("{}", 3_000_000 + i))).collect();
        let mut ctx = String::from("Opening line here.");
        for f in &facts {
            ctx.push(' ');
            ctx.push_str(f);
            ctx.push_str(" Filler sentence in between.");
        }
        (ctx, facts)
    }

    /// Replays a fixed list of responses, one per call.
    struct Scripted(Mutex<Vec<Result<Vec<&'static str>, RetrieveError>>>);

    impl Retriever for Scripted {
        fn retrieve(&self, _: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError> {
            let next = self.0.lock().unwrap().remove(0)?;
            Ok(Retrieval { candidates: next.into_iter().map(String::from).collect(), raw: Some("raw".into()) })
        }
    }

    #[test]
    fn merge_examples() {
        let (merged, added) = dedup_and_merge(vec![cand("A")], vec![cand("a."), cand("B")]);
        assert_eq!(merged.iter().map(|c| c.text.as_str()).collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!(added, 1);
        let (merged, added) = dedup_and_merge(vec![], vec![cand("B"), cand("B")]);
        assert_eq!((merged.len(), added), (1, 1));
        let (merged, added) = dedup_and_merge(vec![cand("A"), cand("B")], vec![]);
        assert_eq!((merged.len(), added), (2, 0));
    }

    #[test]
    fn stop_examples() {
        let cfg = EngineConfig { min_context_chars: 10, ..EngineConfig::default() };
        let mut trace = IterationTrace {
            iteration: 1,
            raw_candidates: vec![],
            new_facts: 0,
            dropped_hallucinations: 0,
            context_len_before: 5000,
            context_len_after: 5000,
        };
        let ctx = "x".repeat(5000);
        assert_eq!(should_stop(&[], &ctx, &trace, &cfg), Some(StopReason::EmptyRetrieval));
        trace.raw_candidates = vec!["f1".into()];
        assert_eq!(should_stop(&[cand("f1")], &ctx, &trace, &cfg), Some(StopReason::NoNewFacts));
        trace.raw_candidates = vec!["f9".into()];
        trace.new_facts = 1;
        assert_eq!(should_stop(&[cand("f9")], &ctx, &trace, &cfg), None);
        assert_eq!(should_stop(&[cand("f9")], "short", &trace, &cfg), Some(StopReason::ContextExhausted));
    }

    #[test]
    fn capacity_three_needs_four_rounds() {
        let (ctx, facts) = ten_facts();
        let mock = MockRetriever::new(MockParams::exact(3));
        let res = run_fact("k1", &ctx, &EngineConfig::with_n(4), &mock).unwrap();
        assert_eq!(res.facts.len(), 10);
        assert_eq!(res.iterations_run, 4);
        assert_eq!(res.stop_reason, StopReason::MaxIterations);
        assert_eq!(res.trace.iter().map(|t| t.new_facts).collect::<Vec<_>>(), [3, 3, 3, 1]);
        let texts: Vec<&str> = res.facts.iter().map(|f| f.text.as_str()).collect();
        assert_eq!(texts, facts.iter().map(String::as_str).collect::<Vec<_>>());

        let res = run_fact("k1", &ctx, &EngineConfig::with_n(5), &mock).unwrap();
        assert_eq!(res.iterations_run, 5);
        assert_eq!(res.stop_reason, StopReason::EmptyRetrieval);
    }

    #[test]
    fn no_gold_facts() {
        let mock = MockRetriever::new(MockParams::exact(3));
        let res = run_fact("k1", "Nothing to see. At all.", &EngineConfig::with_n(4), &mock).unwrap();
        assert!(res.facts.is_empty());
        assert_eq!(res.iterations_run, 1);
        assert_eq!(res.stop_reason, StopReason::EmptyRetrieval);
    }

    #[test]
    fn single_round_is_one_shot() {
        let (ctx, facts) = ten_facts();
        let mock = MockRetriever::new(MockParams::exact(3));
        let res = run_fact("k1", &ctx, &EngineConfig::with_n(1), &mock).unwrap();
        assert_eq!(res.facts.iter().map(|f| f.text.clone()).collect::<Vec<_>>(), facts[..3]);
        assert_eq!(res.stop_reason, StopReason::MaxIterations);
    }

    #[test]
    fn hallucinations_are_dropped() {
        let retriever = Scripted(Mutex::new(vec![Ok(vec!["present fact", "ghost fact"]), Ok(vec![])]));
        let res = run_fact("q", "A present fact here. Other text.", &EngineConfig::with_n(3), &retriever).unwrap();
        assert_eq!(res.facts.len(), 1);
        assert!(res.facts.iter().all(|f| f.located));
        assert_eq!(res.trace[0].dropped_hallucinations, 1);
        assert_eq!(res.raw_responses.len(), 2);
    }

    #[test]
    fn keeping_unlocated_when_asked() {
        let retriever = Scripted(Mutex::new(vec![Ok(vec!["ghost fact"])]));
        let cfg = EngineConfig { drop_unlocated: false, ..EngineConfig::with_n(1) };
        let res = run_fact("q", "Some text.", &cfg, &retriever).unwrap();
        assert_eq!(res.facts.len(), 1);
        assert!(!res.facts[0].located);
    }

    #[test]
    fn only_hallucinated_round_keeps_going() {
        let retriever = Scripted(Mutex::new(vec![Ok(vec!["ghost"]), Ok(vec!["real one"]), Ok(vec![])]));
        let res = run_fact("q", "The real one is here.", &EngineConfig::with_n(5), &retriever).unwrap();
        assert_eq!(res.facts.len(), 1);
        assert_eq!(res.iterations_run, 3);
        assert_eq!(res.stop_reason, StopReason::EmptyRetrieval);
    }

    #[test]
    fn backend_error_carries_partial_result() {
        let retriever = Scripted(Mutex::new(vec![
            Ok(vec!["alpha"]),
            Err(RetrieveError::Backend { message: "down".into(), attempts: 4 }),
        ]));
        let err = run_fact("q", "alpha. beta.", &EngineConfig::with_n(3), &retriever).unwrap_err();
        match err {
            EngineError::Retrieval { partial, source } => {
                assert_eq!(partial.facts.len(), 1);
                assert_eq!(partial.iterations_run, 1);
                assert!(matches!(source, RetrieveError::Backend { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_inputs() {
        let mock = MockRetriever::new(MockParams::exact(1));
        assert!(matches!(run_fact("q", "c", &EngineConfig::with_n(0), &mock), Err(EngineError::InvalidConfig(_))));
        assert!(matches!(run_fact("q", "", &EngineConfig::with_n(1), &mock), Err(EngineError::EmptyContext)));
    }

    #[test]
    fn noise_strategy_keeps_length() {
        let (ctx, _) = ten_facts();
        let mock = MockRetriever::new(MockParams::exact(3));
        let cfg = EngineConfig {
            rewrite_strategy: RewriteStrategy { kind: RewriteKind::ReplaceWithNoise, noise_seed: 5 },
            ..EngineConfig::with_n(5)
        };
        let res = run_fact("k1", &ctx, &cfg, &mock).unwrap();
        assert_eq!(res.facts.len(), 10);
        assert!(res.trace.iter().all(|t| t.context_len_after == t.context_len_before));
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: EngineConfig = serde_json::from_str(r#"{"n": 3}"#).unwrap();
        assert_eq!(cfg, EngineConfig::with_n(3));
    }
}
