//! HTTP implementations: an OpenAI-style chat-completions endpoint and
//! SerpAPI Google search.

use super::{ChatRequest, ClientError, Completion, CompletionClient, SearchClient, SearchResult};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

pub const DEFAULT_CHAT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_SEARCH_URL: &str = "https://serpapi.com/search.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_in_flight() -> usize {
    4
}

/// Counting semaphore bounding concurrent requests on one client handle.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(cap: usize) -> Self {
        Self { free: Mutex::new(cap.max(1)), cv: Condvar::new() }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

fn agent(timeout_ms: u64) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into()
}

fn api_key(var: &str) -> Result<String, ClientError> {
    std::env::var(var).map_err(|_| ClientError::Config(format!("environment variable {var} is not set")))
}

fn transport(e: ureq::Error) -> ClientError {
    ClientError::Transport(e.to_string())
}

fn read_reply(mut resp: ureq::http::Response<ureq::Body>) -> Result<Value, ClientError> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(transport)?;
    if !(200..300).contains(&status) {
        return Err(ClientError::Status { code: status, body });
    }
    serde_json::from_str(&body).map_err(|e| ClientError::MalformedReply {
        line: e.line(),
        fragment: body.chars().take(200).collect(),
        reason: e.to_string(),
    })
}

pub struct HttpChatClient {
    config: EndpointConfig,
    key: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        let key = api_key(&config.api_key_env)?;
        Ok(Self { agent: agent(config.timeout_ms), gate: Gate::new(config.max_in_flight), key, config })
    }
}

/// Extracts the reply from a chat-completions response body.
pub fn parse_chat_response(body: &Value) -> Result<Completion, ClientError> {
    let malformed = |reason: &str| ClientError::MalformedReply {
        line: 1,
        fragment: body.to_string().chars().take(200).collect(),
        reason: reason.into(),
    };
    let choice = body.pointer("/choices/0").ok_or_else(|| malformed("no choices"))?;
    if let Some(refusal) = choice.pointer("/message/refusal").and_then(Value::as_str) {
        return Ok(Completion::Refusal(refusal.to_string()));
    }
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Ok(Completion::Refusal("content_filter".into()));
    }
    let text =
        choice.pointer("/message/content").and_then(Value::as_str).ok_or_else(|| malformed("no message content"))?;
    Ok(Completion::Text(text.to_string()))
}

impl CompletionClient for HttpChatClient {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError> {
        let _slot = self.gate.enter();
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(transport)?;
        parse_chat_response(&read_reply(resp)?)
    }
}

pub struct SerpApiClient {
    url: String,
    key: String,
    agent: ureq::Agent,
    gate: Gate,
}

impl SerpApiClient {
    pub fn new(url: &str, api_key_env: &str, timeout_ms: u64, max_in_flight: usize) -> Result<Self, ClientError> {
        Ok(Self {
            url: url.to_string(),
            key: api_key(api_key_env)?,
            agent: agent(timeout_ms),
            gate: Gate::new(max_in_flight),
        })
    }
}

/// Organic results with a non-empty snippet, in provider order.
pub fn parse_serp_response(body: &Value, cap: usize) -> Vec<SearchResult> {
    let field = |r: &Value, k: &str| r.get(k).and_then(Value::as_str).unwrap_or_default().trim().to_string();
    body.get("organic_results")
        .and_then(Value::as_array)
        .map(|rs| {
            rs.iter()
                .map(|r| SearchResult { title: field(r, "title"), snippet: field(r, "snippet"), url: field(r, "link") })
                .filter(|r| !r.snippet.is_empty())
                .take(cap)
                .collect()
        })
        .unwrap_or_default()
}

impl SearchClient for SerpApiClient {
    fn name(&self) -> &str {
        "serpapi"
    }

    fn search(&self, query: &str, cap: usize) -> Result<Vec<SearchResult>, ClientError> {
        let _slot = self.gate.enter();
        let resp = self
            .agent
            .get(&self.url)
            .query("engine", "google")
            .query("q", query)
            .query("num", cap.to_string())
            .query("api_key", &self.key)
            .call()
            .map_err(transport)?;
        Ok(parse_serp_response(&read_reply(resp)?, cap))
    }
}
