use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::remote::JsonClient;
use super::{BackendError, Embedder, RemoteSettings};

/// Offline bag-of-words embedder.
///
/// Each lowercase alphanumeric token is hashed (SHA-256 with the seed) into
/// a ChaCha stream that yields a pseudo-random direction in `[-1, 1)^dim`;
/// the text's vector is the sum over its tokens. Output depends only on
/// `(seed, dim, text)` and is identical across platforms.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    fingerprint: String,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 64;
    pub const DEFAULT_SEED: u64 = 0x5eed;

    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            fingerprint: format!("local-hash-v1:dim={dim}:seed={seed}"),
        }
    }

    fn tokens(text: &str) -> Vec<String> {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        if tokens.is_empty() {
            vec![text.trim().to_string()]
        } else {
            tokens
        }
    }

    fn direction(&self, token: &str, out: &mut [f64]) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        for v in out.iter_mut() {
            *v += rng.gen_range(-1.0..1.0);
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, Self::DEFAULT_SEED)
    }
}

impl Embedder for HashEmbedder {
    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut out = vec![0.0; self.dim];
        for t in Self::tokens(text) {
            self.direction(&t, &mut out);
        }
        Ok(out)
    }
}

/// Embeddings endpoint client (`{"model", "input"}` in,
/// `data[0].embedding` out).
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: JsonClient,
    dim: usize,
    fingerprint: String,
}

impl RemoteEmbedder {
    pub fn new(
        id: impl Into<String>,
        settings: RemoteSettings,
        dim: usize,
    ) -> Result<Self, BackendError> {
        if dim == 0 {
            return Err(BackendError::Config("embedding dimension must be positive".into()));
        }
        let fingerprint = format!("remote:{}:dim={dim}", settings.model);
        Ok(Self {
            client: JsonClient::new(id.into(), settings)?,
            dim,
            fingerprint,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = self
            .client
            .post(&json!({"model": self.client.settings().model, "input": text}))?;
        body.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| BackendError::Decode {
                backend: self.fingerprint.clone(),
                message: "response has no numeric data[0].embedding".into(),
            })
    }
}
