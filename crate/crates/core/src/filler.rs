//! Neutral filler prose used for haystacks and for noise replacement.
//!
//! The vocabulary holds no digits and none of the words that make up the
//! generator marker phrases, so filler can never be mistaken for a fact.

use rand::Rng;

const SUBJECTS: &[&str] = &[
    "the river",
    "an old road",
    "the market",
    "a quiet village",
    "the harbor",
    "our garden",
    "the library",
    "a long winter",
    "the valley",
    "every morning",
    "the orchard",
    "a small bridge",
    "the mountain path",
    "the kitchen",
    "a patient teacher",
    "the north wind",
    "the station",
    "a wooden boat",
    "the meadow",
    "an early train",
];

const VERBS: &[&str] = &[
    "follows",
    "remembers",
    "shapes",
    "crosses",
    "welcomes",
    "carries",
    "surrounds",
    "outlasts",
    "reflects",
    "quietly joins",
    "slowly changes",
    "often visits",
    "gently touches",
    "rarely leaves",
    "patiently waits for",
    "looks toward",
];

const OBJECTS: &[&str] = &[
    "the distant hills",
    "a field of barley",
    "the evening light",
    "several tired travelers",
    "the grey stones",
    "a crowded square",
    "the open sea",
    "an unfinished letter",
    "the autumn leaves",
    "a narrow street",
    "the warm bread",
    "a forgotten song",
    "the old maps",
    "the painted doors",
    "a circle of friends",
    "the soft rain",
];

const TAILS: &[&str] = &[
    "without hurry",
    "after the storm",
    "before dusk",
    "in the usual way",
    "as it always has",
    "through the long afternoon",
    "with careful attention",
    "near the water",
    "under a pale sky",
    "once the bells fall silent",
    "while the town sleeps",
    "for reasons nobody recalls",
];

/// One filler sentence, capitalized and terminated with a period.
pub fn sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
    let verb = VERBS[rng.random_range(0..VERBS.len())];
    let object = OBJECTS[rng.random_range(0..OBJECTS.len())];
    let mut s = String::with_capacity(96);
    let mut chars = subject.chars();
    if let Some(first) = chars.next() {
        s.extend(first.to_uppercase());
        s.push_str(chars.as_str());
    }
    s.push(' ');
    s.push_str(verb);
    s.push(' ');
    s.push_str(object);
    if rng.random_bool(0.6) {
        s.push(' ');
        s.push_str(TAILS[rng.random_range(0..TAILS.len())]);
    }
    s.push('.');
    s
}

/// Filler text of exactly `len` characters made of space-separated sentences.
///
/// The last sentence is cut to fit and closed with a period. Output is ASCII.
pub fn text<R: Rng + ?Sized>(rng: &mut R, len: usize) -> String {
    let mut out = String::with_capacity(len + 128);
    while out.len() < len {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&sentence(rng));
    }
    out.truncate(len);
    if out.pop().is_some() {
        out.push('.');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_length_and_marker_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [0usize, 1, 2, 17, 500, 4000] {
            let t = text(&mut rng, len);
            assert_eq!(t.len(), len);
            assert!(!t.chars().any(|c| c.is_ascii_digit()));
            let lower = t.to_lowercase();
            for marker in ["special magic number", "little penguin", "★"] {
                assert!(!lower.contains(marker));
            }
        }
    }
}
