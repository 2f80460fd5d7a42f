//! Deterministic retriever with a bounded number of output slots.
//!
//! It reads the generator's marker sentences straight out of the context
//! and reports at most `capacity_m` of them per call: the earliest ones in
//! context order, optionally with the last slot given to the final marker
//! (recovery at the end of generation). Anything past the capacity is lost,
//! which is the failure the iterative loop is meant to fix.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::taskgen::{niah_needle, star_sentence, STARS_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    pub capacity_m: usize,
    #[serde(default)]
    pub tail_recovery: bool,
    #[serde(default)]
    pub hallucination_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MockParams {
    fn default() -> Self {
        Self { capacity_m: 3, tail_recovery: false, hallucination_rate: 0.0, seed: 0 }
    }
}

impl MockParams {
    pub fn exact(capacity_m: usize) -> Self {
        Self { capacity_m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.capacity_m == 0 {
            return Err("mock capacity_m must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.hallucination_rate) {
            return Err(format!("hallucination_rate {} outside [0, 1]", self.hallucination_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Marker {
    Needle { key: String },
    Star,
}

fn marker_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"One of the special magic numbers for (\S+) is: (\d+)\.|The little penguin counted (\d+) ★")
            .expect("static regex")
    })
}

fn call_rng(params: &MockParams, query: &str, context: &str, round: u32) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(params.seed.to_le_bytes());
    hasher.update(round.to_le_bytes());
    hasher.update((query.len() as u64).to_le_bytes());
    hasher.update(query.as_bytes());
    hasher.update(context.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

fn fabricate(marker: &Marker, context: &str, taken: &HashSet<String>, rng: &mut ChaCha8Rng) -> String {
    let absent = |s: &String| !context.contains(s.as_str()) && !taken.contains(s);
    match marker {
        Marker::Needle { key } => loop {
            let value: u32 = rng.random_range(1_000_000..10_000_000);
            let fake = niah_needle(key, &value.to_string());
            if absent(&fake) {
                return fake;
            }
        },
        Marker::Star => {
            for _ in 0..64 {
                let fake = star_sentence(rng.random_range(1..=STARS_MAX));
                if absent(&fake) {
                    return fake;
                }
            }
            (STARS_MAX + 1..).map(star_sentence).find(absent).expect("unbounded search")
        }
    }
}

/// One mock retrieval call.
///
/// `round` is the 1-based iteration of the calling loop; it only feeds the
/// hallucination RNG, so outputs are a pure function of
/// `(params, query, context, round)`.
pub fn mock_retrieve(query: &str, context: &str, params: &MockParams, round: u32) -> Vec<String> {
    let present: Vec<(Marker, &str)> = marker_regex()
        .captures_iter(context)
        .filter_map(|cap| {
            let text = cap.get(0).expect("group 0").as_str();
            match cap.get(1) {
                Some(key) if query.contains(key.as_str()) => {
                    Some((Marker::Needle { key: key.as_str().to_string() }, text))
                }
                Some(_) => None,
                None => Some((Marker::Star, text)),
            }
        })
        .collect();

    let m = params.capacity_m.max(1);
    let picked: Vec<&(Marker, &str)> = if present.len() <= m {
        present.iter().collect()
    } else if params.tail_recovery {
        present[..m - 1].iter().chain(present.last()).collect()
    } else {
        present[..m].iter().collect()
    };

    let mut rng = call_rng(params, query, context, round);
    let mut out: Vec<String> = Vec::with_capacity(picked.len());
    let mut taken = HashSet::new();
    for (marker, text) in picked {
        let hallucinate = params.hallucination_rate > 0.0 && rng.random_bool(params.hallucination_rate.min(1.0));
        let fact = if hallucinate { fabricate(marker, context, &taken, &mut rng) } else { text.to_string() };
        if taken.insert(fact.clone()) {
            out.push(fact);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_fact_context() -> (String, Vec<String>) {
        let facts: Vec<String> = (1..=10).map(|i| niah_needle("k1", &format!("{}", 1_000_000 + i))).collect();
        let mut ctx = String::from("Start here. ");
        for f in &facts {
            ctx.push_str(f);
            ctx.push_str(" Some filler follows. ");
        }
        (ctx, facts)
    }

    #[test]
    fn first_m_in_context_order() {
        let (ctx, facts) = ten_fact_context();
        let got = mock_retrieve("k1", &ctx, &MockParams::exact(3), 1);
        assert_eq!(got, facts[..3]);
    }

    #[test]
    fn tail_recovery_takes_final_marker() {
        let (ctx, facts) = ten_fact_context();
        let params = MockParams { tail_recovery: true, ..MockParams::exact(3) };
        let got = mock_retrieve("k1", &ctx, &params, 1);
        assert_eq!(got, vec![facts[0].clone(), facts[1].clone(), facts[9].clone()]);
    }

    #[test]
    fn nothing_to_find() {
        assert!(mock_retrieve("k1", "Plain filler only.", &MockParams::exact(3), 1).is_empty());
    }

    #[test]
    fn fewer_facts_than_capacity() {
        let (ctx, facts) = ten_fact_context();
        let short = ctx[..ctx.find(facts[4].as_str()).unwrap()].to_string();
        assert_eq!(mock_retrieve("k1", &short, &MockParams::exact(5), 1), facts[..4]);
    }

    #[test]
    fn unrelated_keys_are_ignored() {
        let ctx = format!("{} {}", niah_needle("k1", "1111111"), niah_needle("other", "2222222"));
        assert_eq!(mock_retrieve("k1", &ctx, &MockParams::exact(5), 1).len(), 1);
    }

    #[test]
    fn full_hallucination_is_absent_from_context() {
        let (ctx, _) = ten_fact_context();
        let params = MockParams { hallucination_rate: 1.0, ..MockParams::exact(1) };
        let got = mock_retrieve("k1", &ctx, &params, 1);
        assert_eq!(got.len(), 1);
        assert!(!ctx.contains(got[0].as_str()));
        assert!(got[0].starts_with("One of the special magic numbers for k1 is: "));
    }

    #[test]
    fn star_hallucination_is_well_formed() {
        let ctx = format!("a.\n{}\nb.\n", star_sentence(5));
        let params = MockParams { hallucination_rate: 1.0, ..MockParams::exact(2) };
        let got = mock_retrieve("", &ctx, &params, 1);
        assert_eq!(got.len(), 1);
        assert!(got[0].starts_with("The little penguin counted "));
        assert_ne!(got[0], star_sentence(5));
    }

    #[test]
    fn seeded_outputs_are_stable() {
        let (ctx, _) = ten_fact_context();
        let params = MockParams { hallucination_rate: 0.5, seed: 42, ..MockParams::exact(3) };
        let a = mock_retrieve("k1", &ctx, &params, 2);
        assert_eq!(a, mock_retrieve("k1", &ctx, &params, 2));
    }

    #[test]
    fn validation() {
        assert!(MockParams::exact(0).validate().is_err());
        assert!(MockParams { hallucination_rate: 1.5, ..MockParams::default() }.validate().is_err());
        assert!(MockParams::default().validate().is_ok());
    }
}
