use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse};

/// Suffix the agents append to a request tag when re-prompting.
pub const RETRY_SUFFIX: &str = "/retry";

/// Deterministic backend answering from a `{request_tag -> text}` table.
///
/// Lookup order: the exact tag, the tag without its `/retry` suffix, then
/// the agent name. The reply is a pure function of the request and the
/// table, and latency is reported as zero.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    vision: bool,
    table: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, table: BTreeMap<String, String>) -> Self {
        Self {
            id: id.into(),
            vision: true,
            table,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(
        id: impl Into<String>,
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        Self::new(
            id,
            pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        )
    }

    /// Load a JSON object mapping request tags to canned replies.
    pub fn from_file(id: impl Into<String>, path: &Path) -> Result<Self, BackendError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let table: BTreeMap<String, String> = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(id, table))
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    /// Number of requests served so far (including unscripted misses).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn lookup(&self, req: &ChatRequest) -> Option<&str> {
        let tag = req.request_tag.as_str();
        let mut candidates = vec![tag];
        if let Some(base) = tag.strip_suffix(RETRY_SUFFIX) {
            candidates.push(base);
        }
        candidates.push(req.agent.as_str());
        candidates
            .into_iter()
            .find_map(|k| self.table.get(k))
            .map(String::as_str)
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_vision(&self) -> bool {
        self.vision
    }

    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self.lookup(req).ok_or_else(|| BackendError::Unscripted {
            backend: self.id.clone(),
            tag: req.request_tag.clone(),
        })?;
        Ok(ChatResponse {
            text: text.to_string(),
            latency: Duration::ZERO,
            backend_id: self.id.clone(),
            token_usage: None,
        })
    }
}
