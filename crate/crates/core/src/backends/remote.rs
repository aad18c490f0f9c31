use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, TokenUsage};

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Connection settings for a chat-completions style HTTP endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    pub url: String,
    pub model: String,
    /// Environment variable holding the API key. `None` sends no auth header.
    pub auth_env_var: Option<String>,
    pub auth_header: String,
    /// Prefix placed before the key, e.g. `Bearer`. Empty sends the bare key.
    pub auth_scheme: String,
    pub vision: bool,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl RemoteSettings {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            auth_env_var: None,
            auth_header: "Authorization".into(),
            auth_scheme: "Bearer".into(),
            vision: false,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        }
    }
}

/// JSON-over-HTTP POST with retry on transient failures.
#[derive(Debug)]
pub(crate) struct JsonClient {
    id: String,
    settings: RemoteSettings,
    http: reqwest::blocking::Client,
}

enum Attempt {
    Done(Value),
    Retry(String, Option<Duration>),
    Fail(BackendError),
}

impl JsonClient {
    pub(crate) fn new(id: String, settings: RemoteSettings) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| BackendError::Config(format!("{id}: http client: {e}")))?;
        Ok(Self { id, settings, http })
    }

    pub(crate) fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    fn auth_value(&self) -> Result<Option<String>, BackendError> {
        let Some(var) = &self.settings.auth_env_var else {
            return Ok(None);
        };
        let key = std::env::var(var).map_err(|_| {
            BackendError::Config(format!("{}: environment variable {var} is not set", self.id))
        })?;
        Ok(Some(if self.settings.auth_scheme.is_empty() {
            key
        } else {
            format!("{} {key}", self.settings.auth_scheme)
        }))
    }

    fn attempt(&self, body: &Value, auth: Option<&str>) -> Attempt {
        let mut req = self.http.post(&self.settings.url).json(body);
        if let Some(auth) = auth {
            req = req.header(self.settings.auth_header.as_str(), auth);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string(), None),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string(), None),
        };
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(BackendError::Decode {
                    backend: self.id.clone(),
                    message: e.to_string(),
                }),
            },
            401 | 403 => Attempt::Fail(BackendError::Auth {
                backend: self.id.clone(),
                status,
            }),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {text}"), retry_after),
            _ => Attempt::Fail(BackendError::Http {
                backend: self.id.clone(),
                status,
                body: text,
            }),
        }
    }

    pub(crate) fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let auth = self.auth_value()?;
        let policy = &self.settings.retry;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(body, auth.as_deref()) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(message, retry_after) => {
                    if attempts > policy.max_retries {
                        return Err(BackendError::Transport {
                            backend: self.id.clone(),
                            attempts,
                            message,
                        });
                    }
                    let wait = retry_after
                        .map(|d| d.min(policy.max_delay))
                        .unwrap_or_else(|| policy.delay(attempts - 1));
                    tracing::debug!(backend = %self.id, attempts, ?wait, "retrying: {message}");
                    thread::sleep(wait);
                }
            }
        }
    }
}

/// Chat-completions client. Provider differences (URL, auth header, model
/// name) are configuration.
#[derive(Debug)]
pub struct RemoteBackend {
    client: JsonClient,
}

impl RemoteBackend {
    pub fn new(id: impl Into<String>, settings: RemoteSettings) -> Result<Self, BackendError> {
        Ok(Self {
            client: JsonClient::new(id.into(), settings)?,
        })
    }

    /// The JSON body sent for `req`. Images travel inline as base64 data URLs.
    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let user_content = if req.attachments.is_empty() {
            Value::String(req.user_prompt.clone())
        } else {
            let b64 = base64::engine::general_purpose::STANDARD;
            let mut parts = vec![json!({"type": "text", "text": req.user_prompt})];
            parts.extend(req.attachments.iter().map(|img| {
                json!({
                    "type": "image_url",
                    "image_url": {
                        "url": format!("data:{};base64,{}", img.media_type, b64.encode(&img.bytes))
                    }
                })
            }));
            Value::Array(parts)
        };
        json!({
            "model": self.client.settings().model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": user_content},
            ],
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
        })
    }
}

fn message_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

impl ChatBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.client.id
    }

    fn supports_vision(&self) -> bool {
        self.client.settings().vision
    }

    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let started = Instant::now();
        let body = self.client.post(&self.request_body(req))?;
        let text = message_text(&body).ok_or_else(|| BackendError::Decode {
            backend: self.client.id.clone(),
            message: "response has no choices[0].message.content".into(),
        })?;
        let token_usage = body.get("usage").and_then(|u| {
            Some(TokenUsage {
                prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
                completion_tokens: u.get("completion_tokens")?.as_u64()?,
            })
        });
        Ok(ChatResponse {
            text,
            latency: started.elapsed(),
            backend_id: self.client.id.clone(),
            token_usage,
        })
    }
}
