//! Completion and embedding access with a persistent response cache.
//!
//! Every request goes through [`LlmClient`], which checks the context budget,
//! serves repeats from the cache, and otherwise dispatches to a [`Backend`]
//! with bounded retries. The `attempt` index is part of the cache key, so
//! "draw another sample" is reproducible: attempt `i` always replays the same
//! response.

mod cache;
mod http;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::ResponseCache;
pub use http::{HttpBackend, HttpConfig};

use crate::error::{Error, Result};
use crate::util::digest_hex;

/// Context window of the completion model (prompt + completion).
pub const DEFAULT_CONTEXT_LIMIT: usize = 2048;
/// Input limit of the embedding model.
pub const DEFAULT_EMBEDDING_CONTEXT_LIMIT: usize = 8191;
pub const DEFAULT_EMBEDDING_DIM: usize = 1536;
pub const DEFAULT_MAX_RETRIES: usize = 5;
/// Characters per token assumed by [`count_tokens`].
pub const CHARS_PER_TOKEN: usize = 4;

/// Summaries are sampled; inference is greedy.
pub const SUMMARY_TEMPERATURE: f64 = 0.8;
pub const INFERENCE_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub attempt: u64,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, max_tokens: usize, attempt: u64) -> Self {
        Self { prompt: prompt.into(), temperature, max_tokens, attempt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

/// A request/response pair as recorded by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub request: CompletionRequest,
    pub response: Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone)]
pub struct BackendError {
    pub retryable: bool,
    pub message: String,
}

impl BackendError {
    pub fn fatal(message: impl Into<String>) -> Self {
        Self { retryable: false, message: message.into() }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        Self { retryable: true, message: message.into() }
    }
}

impl From<Error> for BackendError {
    fn from(e: Error) -> Self {
        BackendError::fatal(e.to_string())
    }
}

/// A completion/embedding provider. Implementations must be safe to call from
/// several threads at once.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<Completion, BackendError>;
    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, BackendError>;
}

/// Approximate token count: `max(pieces, floor(chars / 4))`, where pieces
/// are alphanumeric runs plus individual punctuation marks.
pub fn count_tokens(text: &str) -> usize {
    let mut pieces = 0;
    let mut in_word = false;
    let mut chars = 0;
    for c in text.chars() {
        chars += 1;
        if c.is_alphanumeric() {
            if !in_word {
                pieces += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                pieces += 1;
            }
        }
    }
    pieces.max(chars / CHARS_PER_TOKEN)
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub context_limit: usize,
    pub embedding_context_limit: usize,
    pub max_retries: usize,
    pub backoff_base: Duration,
    /// Fail on cache misses instead of calling the backend.
    pub offline: bool,
    pub embed_batch_size: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            context_limit: DEFAULT_CONTEXT_LIMIT,
            embedding_context_limit: DEFAULT_EMBEDDING_CONTEXT_LIMIT,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base: Duration::from_millis(500),
            offline: false,
            embed_batch_size: 64,
        }
    }
}

pub struct LlmClient {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    config: ClientConfig,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>, cache: ResponseCache, config: ClientConfig) -> Self {
        Self { backend, cache, config, backend_calls: AtomicUsize::new(0), cache_hits: AtomicUsize::new(0) }
    }

    /// Client with an in-memory cache and no backoff delay.
    pub fn in_memory(backend: Arc<dyn Backend>) -> Self {
        let config = ClientConfig { backoff_base: Duration::ZERO, ..Default::default() };
        Self::new(backend, ResponseCache::in_memory(), config)
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Number of requests dispatched to the backend, retries included.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn completion_key(&self, req: &CompletionRequest) -> String {
        digest_hex([
            b"completion".as_slice(),
            self.backend.model_id().as_bytes(),
            req.prompt.as_bytes(),
            &req.temperature.to_bits().to_le_bytes(),
            &(req.max_tokens as u64).to_le_bytes(),
            &req.attempt.to_le_bytes(),
        ])
    }

    fn embedding_key(&self, text: &str) -> String {
        digest_hex([b"embedding".as_slice(), self.backend.model_id().as_bytes(), text.as_bytes()])
    }

    /// Checks that `prompt` plus `max_tokens` fits the context window.
    pub fn check_context(&self, prompt: &str, max_tokens: usize) -> Result<()> {
        let needed = count_tokens(prompt) + max_tokens;
        if needed > self.config.context_limit {
            return Err(Error::ContextOverflow { needed, limit: self.config.context_limit });
        }
        Ok(())
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        if req.prompt.trim().is_empty() {
            return Err(Error::InvalidArgument("empty prompt".into()));
        }
        if !(0.0..=2.0).contains(&req.temperature) {
            return Err(Error::InvalidArgument(format!("temperature {} outside [0, 2]", req.temperature)));
        }
        self.check_context(&req.prompt, req.max_tokens)?;
        let key = self.completion_key(req);
        if let Some(hit) = self.cache.get_completion(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        if self.config.offline {
            return Err(Error::Provider("cache miss while offline".into()));
        }
        let response = self.with_retries(|| self.backend.complete(req))?;
        self.cache.put_completion(&key, response)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut missing: Vec<usize> = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let needed = count_tokens(text);
            if needed > self.config.embedding_context_limit {
                return Err(Error::ContextOverflow { needed, limit: self.config.embedding_context_limit });
            }
            match self.cache.get_embedding(&self.embedding_key(text)) {
                Some(v) => {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    out[i] = Some(v);
                }
                None => missing.push(i),
            }
        }
        if !missing.is_empty() && self.config.offline {
            return Err(Error::Provider("cache miss while offline".into()));
        }
        for chunk in missing.chunks(self.config.embed_batch_size.max(1)) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.with_retries(|| self.backend.embed(&batch))?;
            if vectors.len() != batch.len() {
                return Err(Error::Provider(format!(
                    "embedding backend returned {} vectors for {} texts",
                    vectors.len(),
                    batch.len()
                )));
            }
            for (&i, v) in chunk.iter().zip(vectors) {
                if v.values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Provider("non-finite embedding value".into()));
                }
                out[i] = Some(self.cache.put_embedding(&self.embedding_key(&texts[i]), v)?);
            }
        }
        let out: Vec<EmbeddingVector> = out.into_iter().map(|v| v.expect("filled")).collect();
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.dimension() != first.dimension()) {
                return Err(Error::DimensionMismatch { expected: first.dimension(), found: bad.dimension() });
            }
        }
        Ok(out)
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> std::result::Result<T, BackendError>) -> Result<T> {
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let delay = self.config.backoff_base.saturating_mul(1 << (attempt - 1).min(16));
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable => last = e.message,
                Err(e) => return Err(Error::Provider(e.message)),
            }
        }
        Err(Error::Provider(format!("retries exhausted: {last}")))
    }
}
