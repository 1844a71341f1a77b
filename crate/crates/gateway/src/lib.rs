//! Client abstraction over chat-completions endpoints (multimodal), with
//! retries, in-flight limiting, transcript capture, and a deterministic
//! offline mock.
//!
//! Every judge and generator model the pipeline talks to speaks the same
//! chat-completions JSON, so one wire protocol covers them all. The mock
//! backend keys on a stable content hash of the request, which makes full
//! pipeline runs replayable byte-for-byte without a network.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod http;
pub mod mock;
pub mod transcript;

pub use http::HttpBackend;
pub use mock::MockResponder;
pub use transcript::{TranscriptEntry, TranscriptWriter};

/// Environment variable naming the endpoint URL.
pub const ENDPOINT_URL_VAR: &str = "VLM_GATEWAY_URL";
/// Default environment variable holding the API key.
pub const API_KEY_VAR: &str = "VLM_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("request failed: {0}")]
    Fatal(String),
    #[error("no mock fixture for content hash {0}")]
    MissingFixture(String),
    #[error("gateway configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Backend-level failure, classified for the retry loop.
#[derive(Debug)]
pub enum BackendError {
    /// HTTP 429/5xx, timeouts, connection failures.
    Retryable(String),
    /// Anything that will not improve on retry.
    Fatal(String),
    /// Strict mock with an unknown content hash.
    MissingFixture(String),
}

/// Base64-encoded image attachment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub media_type: String,
    pub base64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImagePayload>,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: "user".into(), text: text.into(), images: Vec::new() }
    }

    pub fn with_png(mut self, png_bytes: &[u8]) -> Self {
        use base64::Engine as _;
        self.images.push(ImagePayload {
            media_type: "image/png".into(),
            base64: base64::engine::general_purpose::STANDARD.encode(png_bytes),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_id: String,
}

impl ChatRequest {
    pub fn new(model_name: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_name: model_name.into(),
            messages,
            temperature: 0.2,
            max_tokens: 1024,
            request_id: String::new(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_request_id(mut self, id: impl Into<String>) -> Self {
        self.request_id = id.into();
        self
    }

    /// Stable content hash over (model, messages, temperature). Request ids
    /// and token limits are deliberately excluded so replays key on content.
    pub fn content_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashable<'a> {
            model: &'a str,
            messages: &'a [Message],
            temperature: f64,
        }
        let canonical = serde_json::to_vec(&Hashable {
            model: &self.model_name,
            messages: &self.messages,
            temperature: self.temperature,
        })
        .expect("request serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hex_string(&hasher.finalize())
    }

    /// Text of the last user message, the part prompt-matching mocks see.
    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.text.as_str())
            .unwrap_or("")
    }
}

fn hex_string(bytes: &[u8]) -> String {
    use std::fmt::Write as _;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff_ms: 250, multiplier: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key; empty means no
    /// auth header.
    pub api_key_source: String,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
    pub mock_mode: bool,
    pub transcript_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint_url: std::env::var(ENDPOINT_URL_VAR).unwrap_or_default(),
            api_key_source: API_KEY_VAR.into(),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout_ms: 60_000,
            mock_mode: true,
            transcript_dir: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be >= 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config("retry.max_attempts must be >= 1".into()));
        }
        if !self.mock_mode && self.endpoint_url.is_empty() {
            return Err(GatewayError::Config(format!(
                "endpoint_url is required outside mock mode (set {ENDPOINT_URL_VAR})"
            )));
        }
        Ok(())
    }
}

/// Anything that can answer a chat request: the HTTP client or a mock.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;
}

/// Counting semaphore bounding concurrently outstanding requests.
struct InFlightLimiter {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl InFlightLimiter {
    fn new(max: usize) -> Self {
        Self { permits: Mutex::new(max), cv: Condvar::new() }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        let mut permits = self.permits.lock().expect("limiter poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("limiter poisoned");
        }
        *permits -= 1;
        InFlightPermit { limiter: self }
    }
}

struct InFlightPermit<'a> {
    limiter: &'a InFlightLimiter,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter poisoned");
        *permits += 1;
        self.limiter.cv.notify_one();
    }
}

/// Shared handle for all model traffic: admission control, retry with
/// exponential backoff, and transcript capture around a pluggable backend.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    limiter: InFlightLimiter,
    retry: RetryPolicy,
    transcript: Option<TranscriptWriter>,
    request_counter: AtomicUsize,
}

impl Gateway {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Box<dyn ChatBackend> = if config.mock_mode {
            Box::new(MockResponder::default())
        } else {
            Box::new(HttpBackend::from_config(config)?)
        };
        Self::with_backend(config, backend)
    }

    pub fn with_backend(
        config: &GatewayConfig,
        backend: Box<dyn ChatBackend>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let transcript = match &config.transcript_dir {
            Some(dir) => Some(TranscriptWriter::create(dir)?),
            None => None,
        };
        Ok(Self {
            backend,
            limiter: InFlightLimiter::new(config.max_in_flight),
            retry: config.retry.clone(),
            transcript,
            request_counter: AtomicUsize::new(0),
        })
    }

    /// Send one chat request. Retryable failures back off exponentially up
    /// to the configured attempt budget; the transcript records the final
    /// outcome with its attempt count.
    pub fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let _permit = self.limiter.acquire();
        self.request_counter.fetch_add(1, Ordering::Relaxed);

        let mut attempts = 0u32;
        let mut backoff = self.retry.base_backoff_ms as f64;
        loop {
            attempts += 1;
            match self.backend.complete(req) {
                Ok(text) => {
                    if let Some(t) = &self.transcript {
                        t.append(&TranscriptEntry::from_exchange(req, &text, attempts))?;
                    }
                    return Ok(text);
                }
                Err(BackendError::Fatal(msg)) => return Err(GatewayError::Fatal(msg)),
                Err(BackendError::MissingFixture(hash)) => {
                    return Err(GatewayError::MissingFixture(hash))
                }
                Err(BackendError::Retryable(msg)) => {
                    if attempts >= self.retry.max_attempts {
                        return Err(GatewayError::Exhausted { attempts, last: msg });
                    }
                    std::thread::sleep(Duration::from_millis(backoff as u64));
                    backoff *= self.retry.multiplier;
                }
            }
        }
    }

    /// Total requests admitted so far (diagnostics).
    pub fn requests_sent(&self) -> usize {
        self.request_counter.load(Ordering::Relaxed)
    }
}
