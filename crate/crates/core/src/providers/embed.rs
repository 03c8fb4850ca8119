use serde::Deserialize;
use serde_json::json;

use super::http::Transport;
use super::{Embedder, ProviderConfig};
use crate::vector::Embedding;
use crate::{Error, Result};

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Client for `POST {base_url}/v1/embeddings`.
#[derive(Clone)]
pub struct HttpEmbedder {
    transport: Transport,
}

impl HttpEmbedder {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        Ok(Self {
            transport: Transport::new(cfg)?,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let body = json!({
            "model": self.transport.config().model_name,
            "input": texts,
            "encoding_format": "float",
        });
        let value = self.transport.post_json("/v1/embeddings", &body)?;
        let resp: EmbeddingsResponse = serde_json::from_value(value)
            .map_err(|e| Error::MalformedResponse(format!("embeddings response: {e}")))?;
        if resp.data.len() != texts.len() {
            return Err(Error::MalformedResponse(format!(
                "{} embeddings returned for {} inputs",
                resp.data.len(),
                texts.len()
            )));
        }
        let mut slots: Vec<Option<Embedding>> = vec![None; texts.len()];
        let indexed = resp.data.iter().all(|d| d.index.is_some());
        for (pos, item) in resp.data.into_iter().enumerate() {
            let i = if indexed { item.index.unwrap_or(pos) } else { pos };
            let emb = Embedding::new(item.embedding)
                .and_then(|e| e.normalize())
                .map_err(|e| Error::MalformedResponse(format!("embedding {i}: {e}")))?;
            match slots.get_mut(i) {
                Some(slot @ None) => *slot = Some(emb),
                _ => {
                    return Err(Error::MalformedResponse(format!(
                        "embedding index {i} is out of range or repeated"
                    )))
                }
            }
        }
        let out: Vec<Embedding> = slots.into_iter().flatten().collect();
        if let Some(first) = out.first() {
            if out.iter().any(|e| e.dim() != first.dim()) {
                return Err(Error::MalformedResponse("embeddings differ in dimension".into()));
            }
        }
        Ok(out)
    }
}

impl Embedder for HttpEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        if texts.is_empty() {
            return Err(Error::Config("nothing to embed".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.transport.config().batch_size) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }

    fn model_name(&self) -> &str {
        &self.transport.config().model_name
    }
}
