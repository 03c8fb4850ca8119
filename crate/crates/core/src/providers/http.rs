//! Shared JSON-over-HTTP transport: bounded in-flight requests and retries
//! with capped exponential backoff.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde_json::Value;
use tracing::{debug, info, warn};

use super::ProviderConfig;
use crate::{Error, Result};

/// Counting semaphore bounding requests in flight.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// Delay before retry number `attempt` (0-based): `min(cap, base * 2^attempt)`,
/// jittered uniformly into its upper half.
pub fn backoff_delay(base_sec: f64, cap_sec: f64, attempt: u32) -> Duration {
    let full = (base_sec * 2f64.powi(attempt.min(30) as i32)).min(cap_sec);
    let jittered = full / 2.0 + rand::rng().random_range(0.0..=1.0) * full / 2.0;
    Duration::from_secs_f64(jittered.max(0.0))
}

enum Failure {
    Transient(String),
    Fatal(String),
    Malformed(String),
}

#[derive(Clone)]
pub(crate) struct Transport {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    slots: Arc<Slots>,
}

impl Transport {
    pub(crate) fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_sec)))
            .http_status_as_error(false)
            .build()
            .into();
        let slots = Arc::new(Slots::new(cfg.max_concurrent));
        Ok(Self { cfg, agent, slots })
    }

    pub(crate) fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// POSTs `body` to `{base_url}{path}` and returns the parsed JSON reply.
    pub(crate) fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        let key = self.cfg.api_key()?;
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.send_once(&url, key.as_deref(), body) {
                Ok(v) => {
                    if attempt > 0 {
                        info!(url = %url, attempts = attempt + 1, "request succeeded after retry");
                    }
                    return Ok(v);
                }
                Err(Failure::Malformed(reason)) => return Err(Error::MalformedResponse(reason)),
                Err(Failure::Fatal(reason)) => {
                    return Err(Error::ProviderUnavailable {
                        attempts: attempt + 1,
                        reason,
                    })
                }
                Err(Failure::Transient(reason)) => {
                    warn!(url = %url, attempt = attempt + 1, reason = %reason, "transient provider failure");
                    last = reason;
                    if attempt + 1 < attempts {
                        let delay = backoff_delay(self.cfg.backoff_base_sec, self.cfg.backoff_cap_sec, attempt);
                        debug!(delay_ms = delay.as_millis() as u64, "backing off");
                        std::thread::sleep(delay);
                    }
                }
            }
        }
        Err(Error::ProviderUnavailable {
            attempts,
            reason: last,
        })
    }

    fn send_once(&self, url: &str, key: Option<&str>, body: &Value) -> std::result::Result<Value, Failure> {
        let _slot = self.slots.acquire();
        let mut req = self.agent.post(url);
        if let Some(k) = key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(classify(e)),
        };
        let status = resp.status().as_u16();
        let text = resp.into_body().read_to_string().map_err(classify)?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Malformed(format!("response is not JSON: {e}"))),
            408 | 429 | 500..=599 => Err(Failure::Transient(format!("HTTP {status}: {}", snippet(&text)))),
            _ => Err(Failure::Fatal(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }
}

fn classify(e: ureq::Error) -> Failure {
    match e {
        ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::RequireHttpsOnly(_) => {
            Failure::Fatal(e.to_string())
        }
        other => Failure::Transient(other.to_string()),
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}
