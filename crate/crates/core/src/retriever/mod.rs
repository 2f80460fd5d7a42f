//! The retrieval step of the loop: given a query and the current context,
//! return candidate fact strings.

pub mod http;
pub mod mock;
pub mod parse;
pub mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpParams, HttpRetriever, RateLimiter, RetryPolicy};
pub use mock::{mock_retrieve, MockParams};
pub use parse::parse_response;
pub use prompt::{render_prompt, PromptTemplate, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum RetrieveError {
    #[error("backend failed after {attempts} attempt(s): {message}")]
    Backend { message: String, attempts: u32 },
    #[error("unparseable response: {message}")]
    Parse { message: String, raw: String },
}

#[derive(Debug, Clone, Copy)]
pub struct RetrieveRequest<'a> {
    pub query: &'a str,
    pub context: &'a str,
    /// 1-based iteration of the calling loop.
    pub round: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Retrieval {
    /// Candidates in backend output order, without duplicates.
    pub candidates: Vec<String>,
    /// Raw model output, when there is one.
    pub raw: Option<String>,
}

pub trait Retriever: Send + Sync {
    fn retrieve(&self, request: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError>;
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(&self, request: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError> {
        (**self).retrieve(request)
    }
}

impl<R: Retriever + ?Sized> Retriever for Box<R> {
    fn retrieve(&self, request: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError> {
        (**self).retrieve(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_tokens() -> u32 {
    512
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 0.0, max_output_tokens: default_max_tokens() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Mock,
    Http,
}

/// Which backend to use and how to drive it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverSpec {
    #[serde(default)]
    pub kind: RetrieverKind,
    pub template_id: TemplateId,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default)]
    pub mock_params: MockParams,
    #[serde(default)]
    pub http: HttpParams,
}

impl RetrieverSpec {
    pub fn mock(template_id: TemplateId, mock_params: MockParams) -> Self {
        Self {
            kind: RetrieverKind::Mock,
            template_id,
            decoding: Decoding::default(),
            mock_params,
            http: HttpParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            RetrieverKind::Mock => self.mock_params.validate(),
            RetrieverKind::Http if self.http.model.is_empty() => Err("http.model must be set".into()),
            RetrieverKind::Http => Ok(()),
        }
    }

    /// Identifier used in records and summaries.
    pub fn model_id(&self) -> String {
        match self.kind {
            RetrieverKind::Mock => {
                let p = &self.mock_params;
                let mut id = format!("mock-m{}", p.capacity_m);
                if p.tail_recovery {
                    id.push_str("-tail");
                }
                if p.hallucination_rate > 0.0 {
                    id.push_str(&format!("-h{}", p.hallucination_rate));
                }
                id
            }
            RetrieverKind::Http => self.http.model.clone(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Retriever>, RetrieveError> {
        self.validate().map_err(|message| RetrieveError::Backend { message, attempts: 0 })?;
        Ok(match self.kind {
            RetrieverKind::Mock => Box::new(MockRetriever::new(self.mock_params.clone())),
            RetrieverKind::Http => {
                Box::new(HttpRetriever::new(self.http.clone(), self.template_id, self.decoding.clone())?)
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct MockRetriever {
    params: MockParams,
}

impl MockRetriever {
    pub fn new(params: MockParams) -> Self {
        Self { params }
    }
}

impl Retriever for MockRetriever {
    fn retrieve(&self, request: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError> {
        let candidates = mock_retrieve(request.query, request.context, &self.params, request.round);
        Ok(Retrieval { candidates, raw: None })
    }
}

/// One-off retrieval through a freshly built backend.
pub fn retrieve(query: &str, context: &str, spec: &RetrieverSpec) -> Result<Vec<String>, RetrieveError> {
    let backend = spec.build()?;
    Ok(backend.retrieve(&RetrieveRequest { query, context, round: 1 })?.candidates)
}
