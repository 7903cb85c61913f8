//! HTTP backends: a chat-completion client for generation and a JSON scoring
//! client for hosted reward models.
//!
//! Both share the same transport: a bounded number of in-flight requests, a
//! per-request timeout, and retries with exponential backoff and jitter on
//! 429, 5xx and transport errors.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AssembledPrompt, Generation, GenerationBackend, RewardBackend, ScoreInputs};
use crate::error::{Error, Result};
use crate::types::{DecodeParams, Usage};

/// Environment variable consulted for the bearer token.
pub const TOKEN_ENV: &str = "PRS_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.max_delay_ms);
        // full jitter in [exp/2, exp]
        let jitter = if exp > 1 {
            rand::rng().random_range(exp / 2..=exp)
        } else {
            exp
        };
        Duration::from_millis(jitter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Full URL of the chat-completions (or scoring) endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            api_key: None,
            timeout_ms: 120_000,
            max_concurrency: 16,
            retry: RetryPolicy::default(),
        }
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            ..Self::default()
        }
    }

    /// Fills `api_key` from [`TOKEN_ENV`] when it is not already set.
    pub fn with_env_token(mut self) -> Self {
        if self.api_key.is_none() {
            self.api_key = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        }
        self
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().expect("semaphore poisoned");
        while *p == 0 {
            p = self.cv.wait(p).expect("semaphore poisoned");
        }
        *p -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

struct Transport {
    cfg: HttpConfig,
    agent: ureq::Agent,
    gate: Semaphore,
    attempts: AtomicU64,
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(Error),
}

impl Transport {
    fn new(cfg: HttpConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() {
            return Err(Error::Config("http backend needs an endpoint".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(Self {
            gate: Semaphore::new(cfg.max_concurrency),
            cfg,
            agent,
            attempts: AtomicU64::new(0),
        })
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(token) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(Error::Backend(format!("invalid json response: {e}"))),
            },
            429 | 500..=599 => Attempt::Retry(format!("status {status}: {text}")),
            _ => Attempt::Fatal(Error::Http { status, body: text }),
        }
    }

    /// Posts `body`, retrying transient failures. Returns the parsed JSON
    /// response and the number of attempts used.
    fn post(&self, body: &Value) -> Result<(Value, u32)> {
        let _permit = self.gate.acquire();
        let max_attempts = self.cfg.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            match self.attempt(body) {
                Attempt::Done(v) => return Ok((v, attempt)),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::debug!("attempt {attempt}/{max_attempts} failed: {msg}");
                    last = msg;
                    if attempt < max_attempts {
                        std::thread::sleep(self.cfg.retry.delay(attempt - 1));
                    }
                }
            }
        }
        Err(Error::BackendUnavailable {
            attempts: max_attempts,
            last,
        })
    }
}

/// Chat-completion request body for one prompt.
pub fn chat_request(model: &str, prompt: &AssembledPrompt, decode: &DecodeParams) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &prompt.system {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": prompt.user}));
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": decode.temperature,
        "top_p": decode.top_p,
        "max_tokens": decode.max_tokens,
    });
    if let Some(seed) = decode.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Reads `choices[0].message.content` and the usage block.
pub fn parse_chat_response(v: &Value) -> Result<(String, Usage)> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Backend("response lacks choices[0].message.content".into()))?;
    let tokens = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok((
        text.to_string(),
        Usage {
            prompt_tokens: tokens("prompt_tokens"),
            completion_tokens: tokens("completion_tokens"),
        },
    ))
}

pub struct HttpGenerator {
    transport: Transport,
}

impl HttpGenerator {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        if cfg.model.is_empty() {
            return Err(Error::Config("http generation backend needs a model".into()));
        }
        Ok(Self {
            transport: Transport::new(cfg)?,
        })
    }

    /// Total HTTP attempts made so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.transport.attempts.load(Ordering::Relaxed)
    }
}

impl GenerationBackend for HttpGenerator {
    fn generate(&self, prompt: &AssembledPrompt, decode: &DecodeParams) -> Result<Generation> {
        let body = chat_request(&self.transport.cfg.model, prompt, decode);
        let (v, attempts) = self.transport.post(&body)?;
        let (text, usage) = parse_chat_response(&v)?;
        Ok(Generation {
            text,
            usage,
            attempts,
        })
    }

    fn identity(&self) -> Value {
        json!({
            "kind": "http",
            "endpoint": self.transport.cfg.endpoint,
            "model": self.transport.cfg.model,
        })
    }
}

/// Client for a JSON scoring endpoint.
///
/// Request: `{model, instruction, preference?, response, reference?}`.
/// Response: `{"reward": x}` or `{"score": x}`.
pub struct HttpReward {
    transport: Transport,
}

impl HttpReward {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        Ok(Self {
            transport: Transport::new(cfg)?,
        })
    }
}

impl RewardBackend for HttpReward {
    fn score(&self, inputs: &ScoreInputs) -> Result<f64> {
        let mut body = serde_json::to_value(inputs)?;
        body["model"] = json!(self.transport.cfg.model);
        let (v, _) = self.transport.post(&body)?;
        v.get("reward")
            .or_else(|| v.get("score"))
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Backend("scoring response lacks a numeric reward".into()))
    }

    fn identity(&self) -> Value {
        json!({
            "kind": "http",
            "endpoint": self.transport.cfg.endpoint,
            "model": self.transport.cfg.model,
        })
    }
}
