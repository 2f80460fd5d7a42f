//! Retrieval prompt templates and placeholder rendering.
//!
//! Placeholders are `{name}` where `name` is an identifier. Any other brace
//! (for example the JSON example in the Counting Stars instruction) is
//! literal text. Substituted values are never rescanned.

use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    RulerMagicNumbers,
    CountingStars,
    GenericQaRetrieval,
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::RulerMagicNumbers => "ruler_magic_numbers",
            TemplateId::CountingStars => "counting_stars",
            TemplateId::GenericQaRetrieval => "generic_qa_retrieval",
        })
    }
}

pub const RULER_MAGIC_NUMBERS: &str = "Some special magic numbers are hidden within the following text. Make sure to memorize it. I will quiz you about the numbers afterwards.\n\n{context}\n\nWhat are all the special magic numbers for {query} mentioned in the provided text? The special magic numbers for {query} mentioned in the provided text are";

macro_rules! stars_instruction {
    () => {
        "On this moonlit and misty night, the little penguin is looking up at the sky and concentrating on counting ★. Please help the little penguin collect the number of ★, for example: {\"little_penguin\": [x, x, x,...]}. The summation is not required, and the numbers in [x, x, x,...] represent the counted number of ★ by the little penguin. Only output the results in JSON format without any explanation."
    };
}

/// Instruction block that follows a Counting Stars context.
pub const COUNTING_STARS_INSTRUCTION: &str = stars_instruction!();

pub const COUNTING_STARS: &str = concat!("{context}\n\n", stars_instruction!());

pub const GENERIC_QA_RETRIEVAL: &str = "Please retrieve all the sentences in the given documents that are important and relevant to answer the question.\n\nQuestion: {question}\n\nThe following are given documents.\n\n{context}\n\nPlease retrieve the sentences from the given documents that are relevant to answer the question. Do not repeat your generation. The question is highlighted again at below.\n\nQuestion: {question}\n\nRetrieved sentences:\n\n(For each retrieved sentence, please start from the bullet symbol \"-\", if no results, just return a single \"-\")";

/// LongBench multi-document QA prompt, used for the optional answer step
/// with the retrieved facts standing in for `{context}`.
pub const LONGBENCH_ANSWER: &str = "Answer the question based on the given passages. Only give me the answer and do not output any other words.\n\nThe following are given passages.\n{context}\n\nAnswer the question based on the given passages. Only give me the answer and do not output any other words.\n\nQuestion: {input}\nAnswer:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> Self {
        let body = match id {
            TemplateId::RulerMagicNumbers => RULER_MAGIC_NUMBERS,
            TemplateId::CountingStars => COUNTING_STARS,
            TemplateId::GenericQaRetrieval => GENERIC_QA_RETRIEVAL,
        };
        Self { id, body }
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for cap in placeholder_regex().captures_iter(self.body) {
            let name = cap[1].to_string();
            if !names.contains(&name) {
                names.push(name);
            }
        }
        names
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("placeholder {{{0}}} is not bound")]
    MissingPlaceholder(String),
}

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

/// Substitutes every placeholder in `body`. Extra variables are ignored.
pub fn render(body: &str, vars: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(body.len() + vars.values().map(|v| v.len()).sum::<usize>());
    let mut cursor = 0;
    for cap in placeholder_regex().captures_iter(body) {
        let whole = cap.get(0).expect("group 0");
        let name = &cap[1];
        let value = vars.get(name).ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&body[cursor..whole.start()]);
        out.push_str(value);
        cursor = whole.end();
    }
    out.push_str(&body[cursor..]);
    Ok(out)
}

pub fn render_prompt(template: &PromptTemplate, vars: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    render(template.body, vars)
}

/// Binds the standard variables for a retrieval call: `{context}` plus the
/// query under both `{query}` and `{question}`.
pub fn render_retrieval(id: TemplateId, query: &str, context: &str) -> Result<String, PromptError> {
    let vars = BTreeMap::from([("context", context), ("query", query), ("question", query)]);
    render_prompt(&PromptTemplate::get(id), &vars)
}
