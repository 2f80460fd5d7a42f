//! OpenAI-compatible chat-completions backend.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::parse::parse_response;
use super::prompt::{render_retrieval, TemplateId};
use super::{Decoding, Retrieval, RetrieveError, RetrieveRequest, Retriever};

pub const ENV_API_BASE: &str = "FACT_API_BASE";
pub const ENV_API_KEY: &str = "FACT_API_KEY";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 1000, factor: 2 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = u64::from(self.factor.max(1)).saturating_pow(attempt);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpParams {
    pub model: String,
    /// Overrides `FACT_API_BASE` when set.
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout() -> u64 {
    120
}

impl Default for HttpParams {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            base_url: None,
            requests_per_minute: None,
            timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
        }
    }
}

/// Spaces calls evenly so that at most `per_minute` start in any minute.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        Self { interval: Duration::from_secs(60) / per_minute.max(1), next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// Response body plus the message content extracted from it.
#[derive(Debug, Clone)]
pub struct Completion {
    pub content: String,
    pub body: String,
}

pub struct HttpRetriever {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    params: HttpParams,
    template: TemplateId,
    decoding: Decoding,
    limiter: Option<Arc<RateLimiter>>,
}

impl std::fmt::Debug for HttpRetriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpRetriever")
            .field("endpoint", &self.endpoint)
            .field("model", &self.params.model)
            .field("template", &self.template)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Retry(String),
    Fatal(RetrieveError),
}

impl HttpRetriever {
    /// Builds a client; the base URL comes from `params.base_url`, then
    /// `FACT_API_BASE`, then the OpenAI default. The key comes from
    /// `FACT_API_KEY` when present.
    pub fn new(params: HttpParams, template: TemplateId, decoding: Decoding) -> Result<Self, RetrieveError> {
        let base = params
            .base_url
            .clone()
            .or_else(|| std::env::var(ENV_API_BASE).ok())
            .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
        let api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Self::with_endpoint(&base, api_key, params, template, decoding)
    }

    pub fn with_endpoint(
        base_url: &str,
        api_key: Option<String>,
        params: HttpParams,
        template: TemplateId,
        decoding: Decoding,
    ) -> Result<Self, RetrieveError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(params.timeout_secs))
            .build()
            .map_err(|e| RetrieveError::Backend { message: e.to_string(), attempts: 0 })?;
        let limiter = params.requests_per_minute.map(|n| Arc::new(RateLimiter::per_minute(n)));
        Ok(Self {
            client,
            endpoint: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            params,
            template,
            decoding,
            limiter,
        })
    }

    /// Shares one limiter between several retrievers.
    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.decoding.temperature,
            "max_tokens": self.decoding.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<Completion, Attempt> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let mut request = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(RetrieveError::Backend {
                message: format!("HTTP {status}: {text}"),
                attempts: 1,
            }));
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(RetrieveError::Parse { message: format!("response is not JSON: {e}"), raw: text.clone() })
        })?;
        match parsed.pointer("/choices/0/message/content").and_then(Value::as_str) {
            Some(content) => Ok(Completion { content: content.to_string(), body: text }),
            None => Err(Attempt::Fatal(RetrieveError::Parse {
                message: "missing choices[0].message.content".into(),
                raw: text,
            })),
        }
    }

    /// One chat completion with retries on transport errors, 429 and 5xx.
    pub fn complete(&self, prompt: &str) -> Result<Completion, RetrieveError> {
        let body = self.request_body(prompt);
        let retry = &self.params.retry;
        let mut last = String::new();
        for attempt in 0..=retry.max_retries {
            if attempt > 0 {
                thread::sleep(retry.delay(attempt - 1));
            }
            match self.attempt(&body) {
                Ok(done) => return Ok(done),
                Err(Attempt::Fatal(RetrieveError::Backend { message, .. })) => {
                    return Err(RetrieveError::Backend { message, attempts: attempt + 1 })
                }
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Retry(message)) => last = message,
            }
        }
        Err(RetrieveError::Backend { message: last, attempts: retry.max_retries + 1 })
    }
}

impl Retriever for HttpRetriever {
    fn retrieve(&self, request: &RetrieveRequest<'_>) -> Result<Retrieval, RetrieveError> {
        let prompt = render_retrieval(self.template, request.query, request.context)
            .map_err(|e| RetrieveError::Backend { message: e.to_string(), attempts: 0 })?;
        let completion = self.complete(&prompt)?;
        let candidates = parse_response(&completion.content, self.template)?;
        Ok(Retrieval { candidates, raw: Some(completion.content) })
    }
}
