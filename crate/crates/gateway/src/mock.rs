//! Deterministic offline mock backend.
//!
//! Responses resolve in order: exact content-hash fixtures, then ordered
//! prompt-substring rules, then the fallback text. Strict mode turns a miss
//! into an error naming the hash, which is how replay runs detect drift.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use crate::{BackendError, ChatBackend, ChatRequest, GatewayError};

#[derive(Default)]
pub struct MockResponder {
    fixtures: HashMap<String, String>,
    rules: Vec<(String, String)>,
    fallback: Option<String>,
    strict: bool,
    artificial_delay: Option<Duration>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    calls: AtomicUsize,
}

impl MockResponder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a response for an exact request content hash.
    pub fn with_fixture(mut self, hash: impl Into<String>, response: impl Into<String>) -> Self {
        self.fixtures.insert(hash.into(), response.into());
        self
    }

    /// Register a response for the exact hash a given request produces.
    pub fn with_fixture_for(self, req: &ChatRequest, response: impl Into<String>) -> Self {
        let hash = req.content_hash();
        self.with_fixture(hash, response)
    }

    /// Register a prompt rule: any request whose last user text contains
    /// `needle` gets `response`. Rules match in registration order.
    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((needle.into(), response.into()));
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    /// Unknown hashes become errors instead of falling through.
    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    /// Sleep inside each call; lets tests observe concurrent admission.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.artificial_delay = Some(delay);
        self
    }

    /// Build a hash-keyed fixture map from a captured transcript, enabling
    /// byte-identical replay of a previous run.
    pub fn from_transcript(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let mut mock = Self::new().strict();
        let text = std::fs::read_to_string(path)?;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: crate::TranscriptEntry = serde_json::from_str(line)
                .map_err(|e| GatewayError::Fatal(format!("bad transcript line: {e}")))?;
            mock.fixtures.insert(entry.hash, entry.response);
        }
        Ok(mock)
    }

    /// Highest number of simultaneously outstanding calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn resolve(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let hash = req.content_hash();
        if let Some(r) = self.fixtures.get(&hash) {
            return Ok(r.clone());
        }
        let text = req.last_user_text();
        for (needle, response) in &self.rules {
            if text.contains(needle.as_str()) {
                return Ok(response.clone());
            }
        }
        if self.strict {
            return Err(BackendError::MissingFixture(hash));
        }
        if let Some(f) = &self.fallback {
            return Ok(f.clone());
        }
        Err(BackendError::MissingFixture(hash))
    }
}

impl ChatBackend for MockResponder {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.artificial_delay {
            std::thread::sleep(d);
        }
        let result = self.resolve(req);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}
