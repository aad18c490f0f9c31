use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, ChatBackend, Embedder, HashEmbedder, Limited, RemoteBackend, RemoteEmbedder,
    RemoteSettings, RetryPolicy, ScriptedBackend, Semaphore,
};

fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_auth_scheme() -> String {
    "Bearer".into()
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60
}
fn default_backoff_ms() -> u64 {
    500
}
fn yes() -> bool {
    true
}

/// One entry of the `backends` map. API keys are never stored here, only
/// the name of the environment variable holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Remote {
        url: String,
        model: String,
        #[serde(default)]
        auth_env_var: Option<String>,
        #[serde(default = "default_auth_header")]
        auth_header: String,
        #[serde(default = "default_auth_scheme")]
        auth_scheme: String,
        #[serde(default)]
        vision: bool,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_timeout")]
        timeout: u64,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
        #[serde(default)]
        max_in_flight: Option<usize>,
    },
    Mock {
        /// JSON `{request_tag: reply}`; relative to the config file.
        script: PathBuf,
        #[serde(default = "yes")]
        vision: bool,
        #[serde(default)]
        max_in_flight: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    LocalHash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Remote {
        url: String,
        model: String,
        dim: usize,
        #[serde(default)]
        auth_env_var: Option<String>,
        #[serde(default = "default_auth_header")]
        auth_header: String,
        #[serde(default = "default_auth_scheme")]
        auth_scheme: String,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_timeout")]
        timeout: u64,
    },
}

fn default_dim() -> usize {
    HashEmbedder::DEFAULT_DIM
}
fn default_seed() -> u64 {
    HashEmbedder::DEFAULT_SEED
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::LocalHash {
            dim: default_dim(),
            seed: default_seed(),
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Arc<dyn Embedder>, BackendError> {
        Ok(match self {
            EmbedderSpec::LocalHash { dim, seed } => {
                if *dim == 0 {
                    return Err(BackendError::Config("embedder dim must be positive".into()));
                }
                Arc::new(HashEmbedder::new(*dim, *seed))
            }
            EmbedderSpec::Remote {
                url,
                model,
                dim,
                auth_env_var,
                auth_header,
                auth_scheme,
                max_retries,
                timeout,
            } => {
                let mut s = RemoteSettings::new(url.clone(), model.clone());
                s.auth_env_var = auth_env_var.clone();
                s.auth_header = auth_header.clone();
                s.auth_scheme = auth_scheme.clone();
                s.timeout = Duration::from_secs(*timeout);
                s.retry.max_retries = *max_retries;
                Arc::new(RemoteEmbedder::new("embedder", s, *dim)?)
            }
        })
    }
}

/// Which backend each agent role talks to. `default` covers roles that are
/// not listed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentRoutes(pub BTreeMap<String, String>);

/// The backend section of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendsConfig {
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub agents: AgentRoutes,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    /// Global cap on concurrent backend calls.
    #[serde(default)]
    pub max_in_flight: Option<usize>,
}

impl BackendsConfig {
    /// Backend id serving `role`.
    pub fn route(&self, role: &str) -> Result<&str, BackendError> {
        if let Some(id) = self.agents.0.get(role).or_else(|| self.agents.0.get("default")) {
            return Ok(id);
        }
        match self.backends.keys().collect::<Vec<_>>().as_slice() {
            [only] => Ok(only.as_str()),
            _ => Err(BackendError::Config(format!(
                "no backend routed for agent {role:?} (add it or `default` under `agents`)"
            ))),
        }
    }

    /// Instantiate every backend. Relative script paths resolve against
    /// `base_dir`.
    pub fn build(
        &self,
        base_dir: &Path,
        global_cap: Option<usize>,
    ) -> Result<BTreeMap<String, Arc<dyn ChatBackend>>, BackendError> {
        let global = global_cap
            .or(self.max_in_flight)
            .map(|n| Arc::new(Semaphore::new(n)));
        let mut out = BTreeMap::new();
        for (id, spec) in &self.backends {
            let (backend, cap): (Arc<dyn ChatBackend>, Option<usize>) = match spec {
                BackendSpec::Mock {
                    script,
                    vision,
                    max_in_flight,
                } => {
                    let path = base_dir.join(script);
                    (
                        Arc::new(ScriptedBackend::from_file(id.clone(), &path)?.with_vision(*vision)),
                        *max_in_flight,
                    )
                }
                BackendSpec::Remote {
                    url,
                    model,
                    auth_env_var,
                    auth_header,
                    auth_scheme,
                    vision,
                    max_retries,
                    timeout,
                    backoff_ms,
                    max_in_flight,
                } => {
                    let settings = RemoteSettings {
                        url: url.clone(),
                        model: model.clone(),
                        auth_env_var: auth_env_var.clone(),
                        auth_header: auth_header.clone(),
                        auth_scheme: auth_scheme.clone(),
                        vision: *vision,
                        timeout: Duration::from_secs(*timeout),
                        retry: RetryPolicy {
                            max_retries: *max_retries,
                            base_delay: Duration::from_millis(*backoff_ms),
                            ..RetryPolicy::default()
                        },
                    };
                    (Arc::new(RemoteBackend::new(id.clone(), settings)?), *max_in_flight)
                }
            };
            let wrapped: Arc<dyn ChatBackend> = if cap.is_some() || global.is_some() {
                Arc::new(Limited::new(backend, cap.unwrap_or(usize::MAX), global.clone()))
            } else {
                backend
            };
            out.insert(id.clone(), wrapped);
        }
        Ok(out)
    }
}
