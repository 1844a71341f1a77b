//! Blocking HTTP backend speaking the chat-completions JSON protocol.

use std::time::Duration;

use serde_json::{json, Value};

use crate::{BackendError, ChatBackend, ChatRequest, GatewayConfig, GatewayError};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let api_key = if config.api_key_source.is_empty() {
            None
        } else {
            match std::env::var(&config.api_key_source) {
                Ok(v) => Some(v),
                Err(_) => {
                    return Err(GatewayError::Config(format!(
                        "api key environment variable {} is not set",
                        config.api_key_source
                    )))
                }
            }
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { client, endpoint_url: config.endpoint_url.clone(), api_key })
    }

    fn body(req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| {
                if m.images.is_empty() {
                    json!({ "role": m.role, "content": m.text })
                } else {
                    let mut parts = vec![json!({ "type": "text", "text": m.text })];
                    for img in &m.images {
                        parts.push(json!({
                            "type": "image_url",
                            "image_url": {
                                "url": format!("data:{};base64,{}", img.media_type, img.base64)
                            }
                        }));
                    }
                    json!({ "role": m.role, "content": parts })
                }
            })
            .collect();
        json!({
            "model": req.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    fn extract_text(value: &Value) -> Option<String> {
        let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
        match content {
            Value::String(s) => Some(s.clone()),
            Value::Array(parts) => {
                let mut out = String::new();
                for p in parts {
                    if let Some(t) = p.get("text").and_then(Value::as_str) {
                        out.push_str(t);
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let mut builder = self
            .client
            .post(&self.endpoint_url)
            .header("content-type", "application/json")
            .json(&Self::body(req));
        if let Some(key) = &self.api_key {
            builder = builder.header("authorization", format!("Bearer {key}"));
        }

        let response = builder.send().map_err(|e| {
            // connect errors and timeouts are worth retrying
            BackendError::Retryable(format!("transport: {e}"))
        })?;

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Retryable(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("http status {status}")));
        }
        let value: Value = response
            .json()
            .map_err(|e| BackendError::Fatal(format!("invalid JSON response: {e}")))?;
        Self::extract_text(&value)
            .ok_or_else(|| BackendError::Fatal("response carries no message content".into()))
    }
}
