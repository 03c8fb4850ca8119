//! Everything that talks to the outside world: the embeddings and chat
//! completion clients, the optional judge call, and the on-disk frame
//! embedding cache.

pub mod cache;
mod chat;
mod embed;
mod http;
mod judge;

use serde::{Deserialize, Serialize};

pub use cache::{cache_load, cache_store, load_cache_file, CacheFile, CACHE_MAGIC, CACHE_SCHEMA_VERSION};
pub use chat::HttpChatClient;
pub use embed::HttpEmbedder;
pub use http::backoff_delay;
pub use judge::{judge_prompt, judge_summary, parse_verdict, JudgeDimension, JudgeVerdict};

use crate::vector::Embedding;
use crate::{Error, Result};

/// Text to embeddings, one unit-normalized vector per input, in input order.
pub trait Embedder: Send + Sync {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>>;
    fn model_name(&self) -> &str;
}

/// A single-turn chat completion.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
    fn model_name(&self) -> &str;
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_base() -> f64 {
    0.5
}
fn default_backoff_cap() -> f64 {
    8.0
}
fn default_batch() -> usize {
    64
}
fn default_temperature() -> Option<f64> {
    Some(0.0)
}

/// Connection settings for one OpenAI-style endpoint.
///
/// The API key is never stored here, only the name of the environment
/// variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_sec: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_sec: f64,
    #[serde(default = "default_backoff_cap")]
    pub backoff_cap_sec: f64,
    /// Inputs per embeddings request.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Sent with chat requests; `None` omits the field.
    #[serde(default = "default_temperature")]
    pub temperature: Option<f64>,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            timeout_sec: default_timeout(),
            max_retries: default_retries(),
            max_concurrent: default_concurrency(),
            backoff_base_sec: default_backoff_base(),
            backoff_cap_sec: default_backoff_cap(),
            batch_size: default_batch(),
            temperature: default_temperature(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad(format!("base_url must be http(s), got `{}`", self.base_url));
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        if !(self.timeout_sec.is_finite() && self.timeout_sec > 0.0) {
            return bad(format!("timeout_sec must be positive, got {}", self.timeout_sec));
        }
        if self.max_concurrent < 1 {
            return bad("max_concurrent must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.backoff_base_sec >= 0.0 && self.backoff_cap_sec >= self.backoff_base_sec) {
            return bad("backoff must satisfy 0 <= base <= cap".into());
        }
        Ok(())
    }

    pub(crate) fn api_key(&self) -> Result<Option<String>> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .ok()
                .filter(|k| !k.is_empty())
                .map(Some)
                .ok_or_else(|| Error::AuthMissing(var.clone())),
        }
    }
}
