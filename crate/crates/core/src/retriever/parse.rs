//! Turns raw model output into candidate fact strings.

use std::collections::HashSet;

use regex::Regex;
use serde_json::Value;

use super::prompt::TemplateId;
use super::RetrieveError;
use crate::taskgen::star_sentence;

fn digit_runs() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d{6,}").expect("static regex"))
}

fn parse_error(message: impl Into<String>, raw: &str) -> RetrieveError {
    RetrieveError::Parse { message: message.into(), raw: raw.to_string() }
}

/// Parses a model response according to the template that produced it.
///
/// * generic QA: one candidate per `- ` bullet line; a bare `-` means none;
/// * Counting Stars: the `little_penguin` array of the first JSON object,
///   each count rendered back into its star sentence;
/// * magic numbers: every run of six or more digits, as the bare digit
///   string.
///
/// Duplicate candidates are dropped, keeping first occurrence.
pub fn parse_response(raw: &str, template: TemplateId) -> Result<Vec<String>, RetrieveError> {
    let candidates = match template {
        TemplateId::GenericQaRetrieval => raw
            .lines()
            .map(str::trim)
            .filter_map(|line| line.strip_prefix("- "))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
        TemplateId::CountingStars => parse_stars(raw)?,
        TemplateId::RulerMagicNumbers => digit_runs().find_iter(raw).map(|m| m.as_str().to_string()).collect(),
    };
    let mut seen = HashSet::new();
    Ok(candidates.into_iter().filter(|c| seen.insert(c.clone())).collect())
}

fn first_json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn parse_stars(raw: &str) -> Result<Vec<String>, RetrieveError> {
    let object = first_json_object(raw).ok_or_else(|| parse_error("no JSON object in response", raw))?;
    let items = match object.get("little_penguin") {
        Some(Value::Array(items)) => items,
        Some(_) => return Err(parse_error("\"little_penguin\" is not an array", raw)),
        None => return Err(parse_error("missing \"little_penguin\" key", raw)),
    };
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let count = match item {
            Value::Number(n) => match (n.as_u64(), n.as_f64()) {
                (Some(u), _) => u,
                (None, Some(f)) if f >= 0.0 && f.fract() == 0.0 => f as u64,
                _ => return Err(parse_error(format!("non-integer count {n}"), raw)),
            },
            Value::String(s) => s.trim().parse().map_err(|_| parse_error(format!("non-integer count {s:?}"), raw))?,
            other => return Err(parse_error(format!("unexpected count {other}"), raw)),
        };
        out.push(star_sentence(count));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_bullets() {
        let got = parse_response("- fact A\n- fact B", TemplateId::GenericQaRetrieval).unwrap();
        assert_eq!(got, ["fact A", "fact B"]);
    }

    #[test]
    fn generic_empty_marker() {
        assert!(parse_response("-", TemplateId::GenericQaRetrieval).unwrap().is_empty());
        assert!(parse_response("", TemplateId::GenericQaRetrieval).unwrap().is_empty());
        assert!(parse_response("no bullets at all", TemplateId::GenericQaRetrieval).unwrap().is_empty());
    }

    #[test]
    fn generic_dedups_and_skips_preamble() {
        let raw = "Here you go:\n- same\n  - same\n- other";
        assert_eq!(parse_response(raw, TemplateId::GenericQaRetrieval).unwrap(), ["same", "other"]);
    }

    #[test]
    fn stars_json() {
        let got = parse_response(r#"{"little_penguin": [3, 7]}"#, TemplateId::CountingStars).unwrap();
        assert_eq!(got, [star_sentence(3), star_sentence(7)]);
    }

    #[test]
    fn stars_json_inside_prose() {
        let raw = "Sure! {not json} ```json\n{\"little_penguin\": [\"12\", 5.0, 12]}\n```";
        let got = parse_response(raw, TemplateId::CountingStars).unwrap();
        assert_eq!(got, [star_sentence(12), star_sentence(5)]);
    }

    #[test]
    fn stars_without_json_is_error() {
        let err = parse_response("I counted 3 and 7", TemplateId::CountingStars).unwrap_err();
        match err {
            RetrieveError::Parse { raw, .. } => assert_eq!(raw, "I counted 3 and 7"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_response(r#"{"penguin": [1]}"#, TemplateId::CountingStars).is_err());
    }

    #[test]
    fn ruler_digit_runs() {
        let raw = "1234567, 7654321 and 12345 (too short), again 1234567.";
        let got = parse_response(raw, TemplateId::RulerMagicNumbers).unwrap();
        assert_eq!(got, ["1234567", "7654321"]);
    }
}
