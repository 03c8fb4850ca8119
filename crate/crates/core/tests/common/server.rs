//! Minimal HTTP server for provider tests. Each request is handled on its
//! own thread so concurrency limits on the client side are observable.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;
use tiny_http::{Header, Response, Server};

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn json(value: Value) -> Self {
        Self {
            status: 200,
            body: value.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: format!("{{\"error\":\"status {status}\"}}"),
            delay: Duration::ZERO,
        }
    }

    pub fn raw(body: &str) -> Self {
        Self {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub body: Value,
    pub auth: Option<String>,
}

pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub peak_in_flight: Arc<AtomicUsize>,
    pub seen: Arc<std::sync::Mutex<Vec<Seen>>>,
    server: Arc<Server>,
    accept: Option<JoinHandle<()>>,
}

impl MockServer {
    /// `handler` gets the zero-based hit number and the request.
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Seen) -> Reply + Send + Sync + 'static,
    {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind"));
        let addr = server.server_addr().to_ip().expect("tcp address");
        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
        let handler = Arc::new(handler);

        let accept = {
            let (server, hits, peak, seen) = (server.clone(), hits.clone(), peak.clone(), seen.clone());
            thread::spawn(move || {
                let mut workers = Vec::new();
                for mut req in server.incoming_requests() {
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    let (handler, in_flight, peak, seen) = (handler.clone(), in_flight.clone(), peak.clone(), seen.clone());
                    workers.push(thread::spawn(move || {
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let mut body = String::new();
                        let _ = req.as_reader().read_to_string(&mut body);
                        let info = Seen {
                            path: req.url().to_string(),
                            body: serde_json::from_str(&body).unwrap_or(Value::Null),
                            auth: req
                                .headers()
                                .iter()
                                .find(|h| h.field.equiv("Authorization"))
                                .map(|h| h.value.to_string()),
                        };
                        seen.lock().unwrap().push(info.clone());
                        let reply = handler(n, &info);
                        thread::sleep(reply.delay);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                        let _ = req.respond(
                            Response::from_string(reply.body)
                                .with_status_code(reply.status)
                                .with_header(header),
                        );
                    }));
                }
                for w in workers {
                    let _ = w.join();
                }
            })
        };

        Self {
            url: format!("http://{addr}"),
            hits,
            peak_in_flight: peak,
            seen,
            server,
            accept: Some(accept),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

/// OpenAI-style embeddings body; `order` lists which input goes in each slot.
pub fn embeddings_body(vectors: &[Vec<f64>], order: &[usize]) -> Value {
    let data: Vec<Value> = order
        .iter()
        .map(|&i| serde_json::json!({"object": "embedding", "index": i, "embedding": vectors[i]}))
        .collect();
    serde_json::json!({"object": "list", "data": data, "model": "mock"})
}

pub fn chat_body(content: &str) -> Value {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
}
