//! Fixture-backed clients. A completion reply is a pure function of the
//! template name and the SHA-256 of the rendered user message; entries
//! without `prompt_sha256` act as the per-template default.

use super::{ChatRequest, ClientError, Completion, CompletionClient, SearchClient, SearchResult};
use crate::corpus::{read_jsonl, CorpusError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

pub const COMPLETION_FIXTURES: &str = "completions.jsonl";
pub const SEARCH_FIXTURES: &str = "search.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub reply: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refusal: bool,
}

impl FixtureEntry {
    pub fn exact(template: &str, prompt_sha256: &str, reply: &str) -> Self {
        Self {
            template: template.into(),
            prompt_sha256: Some(prompt_sha256.into()),
            reply: reply.into(),
            refusal: false,
        }
    }

    pub fn any(template: &str, reply: &str) -> Self {
        Self { template: template.into(), prompt_sha256: None, reply: reply.into(), refusal: false }
    }
}

#[derive(Debug, Default)]
pub struct MockCompletionClient {
    exact: HashMap<(String, String), Completion>,
    defaults: HashMap<String, Completion>,
    calls: AtomicUsize,
    transient_failures: usize,
}

impl MockCompletionClient {
    /// Later entries override earlier ones with the same key.
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut mock = Self::default();
        for e in entries {
            let reply = if e.refusal { Completion::Refusal(e.reply) } else { Completion::Text(e.reply) };
            match e.prompt_sha256 {
                Some(d) => {
                    mock.exact.insert((e.template, d.to_ascii_lowercase()), reply);
                }
                None => {
                    mock.defaults.insert(e.template, reply);
                }
            }
        }
        mock
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::from_entries(read_jsonl::<FixtureEntry>(path)?))
    }

    /// The first `n` calls fail with a transport error before any lookup.
    pub fn with_transient_failures(mut self, n: usize) -> Self {
        self.transient_failures = n;
        self
    }

    /// Number of requests received so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.defaults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CompletionClient for MockCompletionClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ChatRequest) -> Result<Completion, ClientError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.transient_failures {
            return Err(ClientError::Transport(format!("injected failure {}", n + 1)));
        }
        let digest = request.digest();
        self.exact
            .get(&(request.template.clone(), digest.clone()))
            .or_else(|| self.defaults.get(&request.template))
            .cloned()
            .ok_or(ClientError::NoFixture { template: request.template.clone(), digest })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFixture {
    pub query: String,
    pub results: Vec<SearchResult>,
}

/// Canned search results keyed by the exact query string. Unknown queries
/// return no results.
#[derive(Debug, Default)]
pub struct MockSearchClient {
    results: HashMap<String, Vec<SearchResult>>,
    calls: AtomicUsize,
}

impl MockSearchClient {
    pub fn from_fixtures(fixtures: impl IntoIterator<Item = SearchFixture>) -> Self {
        Self { results: fixtures.into_iter().map(|f| (f.query, f.results)).collect(), calls: AtomicUsize::new(0) }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::from_fixtures(read_jsonl::<SearchFixture>(path)?))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchClient for MockSearchClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn search(&self, query: &str, cap: usize) -> Result<Vec<SearchResult>, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut hits = self.results.get(query).cloned().unwrap_or_default();
        hits.truncate(cap);
        Ok(hits)
    }
}

/// Loads `completions.jsonl` and `search.jsonl` from a fixture directory.
/// Either file may be absent.
pub fn load_fixture_dir(dir: &Path) -> Result<(MockCompletionClient, MockSearchClient), CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "fixture directory not found"),
        });
    }
    let completions = dir.join(COMPLETION_FIXTURES);
    let search = dir.join(SEARCH_FIXTURES);
    let completion =
        if completions.exists() { MockCompletionClient::load(&completions)? } else { MockCompletionClient::default() };
    let search = if search.exists() { MockSearchClient::load(&search)? } else { MockSearchClient::default() };
    Ok((completion, search))
}
