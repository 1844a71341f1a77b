//! Append-only transcript capture: one line-delimited JSON file per run.
//!
//! Entries hold the request content hash alongside the response, so a
//! captured transcript doubles as a strict mock fixture set for replays.
//! Image payloads are summarized (media type and byte count), not stored;
//! the hash already pins their content.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::{ChatRequest, GatewayError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub role: String,
    pub text: String,
    #[serde(default)]
    pub images: Vec<TranscriptImage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptImage {
    pub media_type: String,
    pub encoded_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_id: String,
    pub hash: String,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<TranscriptMessage>,
    pub response: String,
    pub attempts: u32,
}

impl TranscriptEntry {
    pub fn from_exchange(req: &ChatRequest, response: &str, attempts: u32) -> Self {
        Self {
            request_id: req.request_id.clone(),
            hash: req.content_hash(),
            model: req.model_name.clone(),
            temperature: req.temperature,
            messages: req
                .messages
                .iter()
                .map(|m| TranscriptMessage {
                    role: m.role.clone(),
                    text: m.text.clone(),
                    images: m
                        .images
                        .iter()
                        .map(|i| TranscriptImage {
                            media_type: i.media_type.clone(),
                            encoded_len: i.base64.len(),
                        })
                        .collect(),
                })
                .collect(),
            response: response.to_string(),
            attempts,
        }
    }
}

/// Serialized appender for one run's transcript file.
pub struct TranscriptWriter {
    file: Mutex<File>,
    path: PathBuf,
}

impl TranscriptWriter {
    /// Create (or append to) `<dir>/transcript.jsonl`.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(&dir)?;
        let path = dir.as_ref().join("transcript.jsonl");
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { file: Mutex::new(file), path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(entry)
            .map_err(|e| GatewayError::Fatal(format!("transcript serialization: {e}")))?;
        let mut file = self.file.lock().expect("transcript poisoned");
        writeln!(file, "{line}")?;
        Ok(())
    }
}
