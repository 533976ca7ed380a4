use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sumboost_core::llm::{HttpBackend, HttpConfig, ResponseCache};
use sumboost_core::mock_oracle::{MockBackend, OracleSpec};
use sumboost_core::{Backend, ClientConfig, Error, LlmClient, Result, RunConfig};

/// Client limits as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientSection {
    pub context_limit: usize,
    pub embedding_context_limit: usize,
    pub max_retries: usize,
    pub backoff_ms: u64,
    pub embed_batch_size: usize,
}

impl Default for ClientSection {
    fn default() -> Self {
        let d = ClientConfig::default();
        Self {
            context_limit: d.context_limit,
            embedding_context_limit: d.embedding_context_limit,
            max_retries: d.max_retries,
            backoff_ms: d.backoff_base.as_millis() as u64,
            embed_batch_size: d.embed_batch_size,
        }
    }
}

/// Whole TOML config document: `[run]`, `[http]` and `[client]` tables.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FileConfig {
    pub run: RunConfig,
    pub http: HttpConfig,
    pub client: ClientSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
    }
}

pub struct BackendChoice<'a> {
    pub spec: &'a str,
    pub cache: Option<&'a Path>,
    pub offline: bool,
    pub base_url: Option<&'a str>,
}

pub fn build_client(choice: &BackendChoice, cfg: &FileConfig) -> Result<LlmClient> {
    let backend: Arc<dyn Backend> = if let Some(path) = choice.spec.strip_prefix("mock:") {
        Arc::new(MockBackend::new(OracleSpec::load(path)?)?)
    } else if choice.spec == "http" {
        let mut http = cfg.http.clone();
        if let Some(url) = choice.base_url {
            http.base_url = url.to_string();
        }
        Arc::new(HttpBackend::new(http))
    } else {
        return Err(Error::InvalidArgument(format!(
            "unknown backend `{}` (expected `http` or `mock:<oracle.json>`)",
            choice.spec
        )));
    };
    let cache = match choice.cache {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    let c = &cfg.client;
    let config = ClientConfig {
        context_limit: c.context_limit,
        embedding_context_limit: c.embedding_context_limit,
        max_retries: c.max_retries,
        backoff_base: Duration::from_millis(c.backoff_ms),
        offline: choice.offline,
        embed_batch_size: c.embed_batch_size,
    };
    Ok(LlmClient::new(backend, cache, config))
}
