//! In-process provider doubles.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vidfuse::pipeline::ProviderFactory;
use vidfuse::providers::{ChatClient, Embedder, ProviderConfig};
use vidfuse::vector::Embedding;
use vidfuse::{Error, Result};

use super::oracles::random_unit;

fn fnv(text: &str) -> u64 {
    text.bytes().fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Returns table vectors for known texts and a text-seeded random unit
/// vector for anything else.
pub struct LookupEmbedder {
    pub model: String,
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
    pub calls: AtomicUsize,
}

impl LookupEmbedder {
    pub fn new(model: &str, dim: usize, table: HashMap<String, Vec<f64>>) -> Self {
        Self {
            model: model.into(),
            dim,
            table,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Embedder for LookupEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts
            .iter()
            .map(|t| {
                let v = match self.table.get(t) {
                    Some(v) => v.clone(),
                    None => random_unit(&mut ChaCha8Rng::seed_from_u64(fnv(t)), self.dim),
                };
                Embedding::new(v)?.normalize()
            })
            .collect()
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

/// Sum of per-word vectors, normalized. Unknown words contribute nothing.
pub struct BagOfWordsEmbedder {
    pub model: String,
    pub dim: usize,
    pub words: HashMap<String, Vec<f64>>,
}

impl Embedder for BagOfWordsEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|t| {
                let mut sum = vec![0.0; self.dim];
                for w in t.split_whitespace() {
                    if let Some(v) = self.words.get(w) {
                        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                    }
                }
                Embedding::new(sum)?.normalize()
            })
            .collect()
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

/// Treats each summary as a word list. A prompt asking for what the
/// summaries have "in common" gets their shared words back; any other
/// prompt gets the union. Summaries are recognized by exact text.
pub struct WordSetChat {
    pub model: String,
    pub known: Vec<String>,
    pub calls: AtomicUsize,
}

impl WordSetChat {
    pub fn new(model: &str, known: Vec<String>) -> Self {
        Self {
            model: model.into(),
            known,
            calls: AtomicUsize::new(0),
        }
    }
}

impl ChatClient for WordSetChat {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let present: Vec<&String> = self.known.iter().filter(|t| prompt.contains(t.as_str())).collect();
        if present.is_empty() {
            return Err(Error::EmptyResponse);
        }
        let sets: Vec<BTreeSet<&str>> = present.iter().map(|t| t.split_whitespace().collect()).collect();
        let keep = |w: &str| {
            if prompt.contains("in common") {
                sets.iter().all(|s| s.contains(w))
            } else {
                true
            }
        };
        let mut out: Vec<&str> = Vec::new();
        for t in &present {
            for w in t.split_whitespace() {
                if keep(w) && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        Ok(out.join(" "))
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

/// Replies through a closure.
pub struct FnChat<F: Fn(&str) -> Result<String> + Send + Sync> {
    pub model: String,
    pub reply: F,
}

impl<F: Fn(&str) -> Result<String> + Send + Sync> ChatClient for FnChat<F> {
    fn complete(&self, prompt: &str) -> Result<String> {
        (self.reply)(prompt)
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

/// Hands out fixed clients. Chat clients are picked by model name, falling
/// back to `chat`.
pub struct MockProviders {
    pub embedder: Arc<dyn Embedder>,
    pub chat: Arc<dyn ChatClient>,
    pub by_model: HashMap<String, Arc<dyn ChatClient>>,
}

impl MockProviders {
    pub fn new(embedder: Arc<dyn Embedder>, chat: Arc<dyn ChatClient>) -> Self {
        Self {
            embedder,
            chat,
            by_model: HashMap::new(),
        }
    }
}

impl ProviderFactory for MockProviders {
    fn embedder(&self, _cfg: &ProviderConfig) -> Result<Arc<dyn Embedder>> {
        Ok(self.embedder.clone())
    }

    fn chat(&self, cfg: &ProviderConfig) -> Result<Arc<dyn ChatClient>> {
        Ok(self.by_model.get(&cfg.model_name).cloned().unwrap_or_else(|| self.chat.clone()))
    }
}
