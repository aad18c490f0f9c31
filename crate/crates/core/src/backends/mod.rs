//! Chat and embedding providers.
//!
//! Every network call in the crate goes through this module. Two chat
//! backends ship: [`RemoteBackend`] (chat-completions JSON over HTTP) and
//! [`ScriptedBackend`], a pure lookup table used for offline runs. On the
//! embedding side, [`HashEmbedder`] is a deterministic local projection and
//! [`RemoteEmbedder`] calls an embeddings endpoint.

mod config;
mod embedder;
mod limit;
mod mock;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::EmbeddingVector;

pub use config::{AgentRoutes, BackendSpec, BackendsConfig, EmbedderSpec};
pub use embedder::{HashEmbedder, RemoteEmbedder};
pub use limit::{Limited, Semaphore};
pub use mock::{ScriptedBackend, RETRY_SUFFIX};
pub use remote::{RemoteBackend, RemoteSettings, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{backend}: transport failed after {attempts} attempt(s): {message}")]
    Transport {
        backend: String,
        attempts: u32,
        message: String,
    },
    #[error("{backend}: authentication rejected (HTTP {status})")]
    Auth { backend: String, status: u16 },
    #[error("{backend}: HTTP {status}: {body}")]
    Http {
        backend: String,
        status: u16,
        body: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{backend} is not vision-capable but the request carries {attachments} image(s)")]
    Capability { backend: String, attachments: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{backend}: no scripted response for tag {tag:?}")]
    Unscripted { backend: String, tag: String },
    #[error("{backend}: could not decode provider response: {message}")]
    Decode { backend: String, message: String },
}

/// An image sent alongside a prompt (one video frame).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl ImagePayload {
    pub fn new(media_type: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            media_type: media_type.into(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    /// Agent role name; the scripted backend falls back to it.
    pub agent: String,
    /// Stable per agent and question, e.g. `q0007/rule`.
    pub request_tag: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub attachments: Vec<ImagePayload>,
    pub params: GenerationParams,
}

impl ChatRequest {
    pub fn new(
        agent: impl Into<String>,
        request_tag: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
    ) -> Self {
        Self {
            agent: agent.into(),
            request_tag: request_tag.into(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            attachments: Vec::new(),
            params: GenerationParams::default(),
        }
    }

    pub fn with_attachments(mut self, attachments: Vec<ImagePayload>) -> Self {
        self.attachments = attachments;
        self
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    /// Raw model output, untrimmed.
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
    pub token_usage: Option<TokenUsage>,
}

/// A text-generation provider. Implementations must be shareable across
/// threads.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn supports_vision(&self) -> bool;
    /// Perform the call. Callers should go through [`complete_chat`], which
    /// validates the request first.
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Validate `req` against the backend's capabilities, then send it.
pub fn complete_chat(
    backend: &dyn ChatBackend,
    req: &ChatRequest,
) -> Result<ChatResponse, BackendError> {
    if req.system_prompt.trim().is_empty() || req.user_prompt.trim().is_empty() {
        return Err(BackendError::InvalidRequest(
            "system and user prompts must be non-empty".into(),
        ));
    }
    if !req.attachments.is_empty() && !backend.supports_vision() {
        return Err(BackendError::Capability {
            backend: backend.id().to_string(),
            attachments: req.attachments.len(),
        });
    }
    backend.send(req)
}

/// An embedding function.
pub trait Embedder: Send + Sync {
    /// Provider, model and dimension. Indexes record it to detect staleness.
    fn fingerprint(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

/// Embed non-empty `text`, checking the result's shape.
pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<EmbeddingVector, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::InvalidRequest("cannot embed empty text".into()));
    }
    let values = embedder.embed(text)?;
    if values.len() != embedder.dim() {
        return Err(BackendError::Decode {
            backend: embedder.fingerprint().to_string(),
            message: format!("expected {} dimensions, got {}", embedder.dim(), values.len()),
        });
    }
    EmbeddingVector::new(values).map_err(|e| BackendError::Decode {
        backend: embedder.fingerprint().to_string(),
        message: e.to_string(),
    })
}
