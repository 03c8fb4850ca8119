use serde::Deserialize;
use serde_json::{json, Value};

use super::http::Transport;
use super::{ChatClient, ProviderConfig};
use crate::{Error, Result};

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

/// Client for `POST {base_url}/v1/chat/completions`.
#[derive(Clone)]
pub struct HttpChatClient {
    transport: Transport,
}

impl HttpChatClient {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        Ok(Self {
            transport: Transport::new(cfg)?,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let cfg = self.transport.config();
        let mut body = json!({
            "model": cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = cfg.temperature {
            body["temperature"] = Value::from(t);
        }
        let value = self.transport.post_json("/v1/chat/completions", &body)?;
        let resp: ChatResponse = serde_json::from_value(value)
            .map_err(|e| Error::MalformedResponse(format!("chat response: {e}")))?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::MalformedResponse("no choices in chat response".into()))?
            .message
            .content
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(Error::EmptyResponse);
        }
        Ok(content)
    }

    fn model_name(&self) -> &str {
        &self.transport.config().model_name
    }
}
