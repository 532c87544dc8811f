//! External-service boundary: LLM completions and web search.
//!
//! Every operation the dataset builders need is available through
//! [`LlmService`] and [`web_search`]; both run unchanged against the
//! fixture-backed mocks in [`mock`] or the HTTP clients in [`http`].

pub mod http;
pub mod mock;
mod service;
mod template;

pub use service::{web_search, Extraction, LlmService, ParseMode};
pub use template::{PromptTemplate, TemplateSet, FALSE_ANSWER, HEAD_ENTITIES, JUDGE, TRIPLE_EXTRACTION};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("no mock fixture for template {template} (prompt sha256 {digest})")]
    NoFixture { template: String, digest: String },
    #[error("model refused: {0}")]
    Refused(String),
    #[error("malformed reply at line {line}: {fragment:?} ({reason})")]
    MalformedReply { line: usize, fragment: String, reason: String },
    #[error("judge reply has no verdict tag: {0:?}")]
    JudgeParse(String),
    #[error("unusable candidate: {0}")]
    InvalidCandidate(String),
    #[error("no acceptable candidate after {attempts} attempts")]
    CandidatesExhausted { attempts: u32 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("template error: {0}")]
    Template(String),
    #[error("client configuration: {0}")]
    Config(String),
}

impl ClientError {
    /// Errors worth another request under the retry policy.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::InvalidCandidate(_) => true,
            ClientError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }

    /// Infrastructure faults, as opposed to malformed or unusable content.
    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport(_) | ClientError::Status { .. } | ClientError::NoFixture { .. })
    }
}

/// A chat-completion request: one system and one user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub template: String,
    pub system: String,
    pub user: String,
}

impl ChatRequest {
    /// SHA-256 of the rendered user message, lowercase hex. Mock fixtures
    /// key replies on this value.
    pub fn digest(&self) -> String {
        prompt_digest(&self.user)
    }
}

pub fn prompt_digest(user_message: &str) -> String {
    hex::encode(Sha256::digest(user_message.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Completion {
    Text(String),
    Refusal(String),
}

pub trait CompletionClient: Send + Sync {
    fn name(&self) -> &str;

    /// Issues exactly one request.
    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

pub trait SearchClient: Send + Sync {
    fn name(&self) -> &str;

    /// Issues exactly one request; results in provider order.
    fn search(&self, query: &str, cap: usize) -> Result<Vec<SearchResult>, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, backoff_ms: 0 }
    }

    /// Runs `attempt` until it succeeds, fails with a non-retryable error, or
    /// `max_attempts` calls have been made. Only transport and status errors
    /// wait before the next attempt; a rejected candidate is re-requested at
    /// once.
    pub fn run<T>(&self, mut attempt: impl FnMut(u32) -> Result<T, ClientError>) -> Result<T, ClientError> {
        let max = self.max_attempts.max(1);
        let mut delay = self.backoff_ms;
        let mut n = 1;
        loop {
            match attempt(n) {
                Err(e) if e.is_retryable() && n < max => {
                    log::debug!("attempt {n}/{max} failed: {e}");
                    if delay > 0 && !matches!(e, ClientError::InvalidCandidate(_)) {
                        std::thread::sleep(Duration::from_millis(delay));
                        delay = delay.saturating_mul(2);
                    }
                    n += 1;
                }
                other => return other,
            }
        }
    }
}

/// Wraps a completion client and appends every prompt and reply to an audit
/// JSONL file.
pub struct TracingClient<C> {
    inner: C,
    sink: Mutex<std::io::BufWriter<std::fs::File>>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    client: &'a str,
    template: &'a str,
    prompt_sha256: String,
    system: &'a str,
    user: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reply: Option<&'a Completion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl<C: CompletionClient> TracingClient<C> {
    pub fn new(inner: C, path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner, sink: Mutex::new(std::io::BufWriter::new(file)) })
    }
}

impl<C: CompletionClient> CompletionClient for TracingClient<C> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError> {
        let result = self.inner.complete(request);
        let line = TraceLine {
            client: self.inner.name(),
            template: &request.template,
            prompt_sha256: request.digest(),
            system: &request.system,
            user: &request.user,
            reply: result.as_ref().ok(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        let mut sink = self.sink.lock().expect("trace sink poisoned");
        let written = serde_json::to_writer(&mut *sink, &line)
            .map_err(std::io::Error::from)
            .and_then(|_| sink.write_all(b"\n"))
            .and_then(|_| sink.flush());
        if let Err(e) = written {
            log::warn!("failed to write trace line: {e}");
        }
        result
    }
}

impl<T: CompletionClient + ?Sized> CompletionClient for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError> {
        (**self).complete(request)
    }
}

impl<T: CompletionClient + ?Sized> CompletionClient for std::sync::Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn retry_stops_at_max_attempts() {
        let calls = Cell::new(0);
        let r: Result<(), _> = RetryPolicy::immediate(3).run(|_| {
            calls.set(calls.get() + 1);
            Err(ClientError::Transport("down".into()))
        });
        assert!(r.is_err());
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn non_retryable_errors_return_immediately() {
        let calls = Cell::new(0);
        let r: Result<(), _> = RetryPolicy::immediate(5).run(|_| {
            calls.set(calls.get() + 1);
            Err(ClientError::JudgeParse("maybe".into()))
        });
        assert!(matches!(r, Err(ClientError::JudgeParse(_))));
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn rejected_candidates_are_retried_without_backoff() {
        let start = std::time::Instant::now();
        let policy = RetryPolicy { max_attempts: 3, backoff_ms: 10_000 };
        let r: Result<(), _> = policy.run(|n| Err(ClientError::InvalidCandidate(format!("try {n}"))));
        assert!(matches!(r, Err(ClientError::InvalidCandidate(m)) if m == "try 3"));
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn retry_recovers() {
        let r = RetryPolicy::immediate(3).run(|n| {
            if n < 3 {
                Err(ClientError::Status { code: 503, body: String::new() })
            } else {
                Ok(n)
            }
        });
        assert_eq!(r, Ok(3));
        assert!(!ClientError::Status { code: 400, body: String::new() }.is_retryable());
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(prompt_digest("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn tracing_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mock = mock::MockCompletionClient::from_entries([mock::FixtureEntry::any("judge", "CORRECT")]);
        let client = TracingClient::new(mock, &path).unwrap();
        let req = ChatRequest { template: "judge".into(), system: "s".into(), user: "u".into() };
        client.complete(&req).unwrap();
        client.complete(&ChatRequest { template: "other".into(), ..req }).unwrap_err();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["reply"]["text"], "CORRECT");
        assert!(lines[1]["error"].as_str().unwrap().contains("no mock fixture"));
    }
}
