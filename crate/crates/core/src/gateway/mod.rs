//! Provider-agnostic completion gateway.
//!
//! Every call goes through [`Gateway::complete`], which consults the
//! content-addressed cache, enforces the spend cap, rate-limits per profile,
//! retries transient failures and records a ledger row. Backends only move
//! bytes: they return the raw chat-completions response body, which is what
//! the cache stores.

mod cache;
mod http;
mod ledger;
mod limiter;
mod mock;

pub use cache::{Cache, CacheKey};
pub use http::HttpBackend;
pub use ledger::{Cost, CostReport, LedgerRow, ModelCost, Price};
pub use mock::{MockBackend, MockEntry, MockScript};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ledger::Ledger;
use limiter::RateLimiter;

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Medium,
    High,
}

impl fmt::Display for ReasoningEffort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
            ReasoningEffort::High => "high",
        })
    }
}

/// Per-provider wire quirks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Capabilities {
    /// Reasoning models take `reasoning_effort` and `max_completion_tokens`
    /// and reject sampling parameters.
    pub reasoning: bool,
    /// Send Gemini-style safety settings, all thresholds at `BLOCK_NONE`.
    pub safety_settings: bool,
}

fn default_max_output_tokens() -> u32 {
    DEFAULT_MAX_OUTPUT_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    /// Name used in configs and artifacts, e.g. `o3-mini-low`.
    pub name: String,
    pub provider_id: String,
    pub model_name: String,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub price_in: Price,
    #[serde(default)]
    pub price_out: Price,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningEffort>,
    #[serde(default)]
    pub capabilities: Capabilities,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
}

impl ModelProfile {
    /// Zero-priced profile for the scripted mock backend.
    pub fn mock(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            model_name: name.clone(),
            name,
            provider_id: "mock".into(),
            base_url: String::new(),
            price_in: Price::ZERO,
            price_out: Price::ZERO,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            reasoning_effort: None,
            capabilities: Capabilities::default(),
            requests_per_minute: None,
        }
    }
}

/// Profiles file, JSON or TOML: `{ "profiles": [ ... ] }`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub profiles: Vec<ModelProfile>,
}

impl ProviderConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let parsed: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)
                .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(parsed)
    }

    pub fn get(&self, name: &str) -> Option<&ModelProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub profile: ModelProfile,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub reasoning_effort: Option<ReasoningEffort>,
    /// Re-ask counter; zero for the first ask and left out of the digest.
    pub attempt: u32,
}

impl CompletionRequest {
    /// Temperature 0, top-p 1, reasoning effort taken from the profile.
    pub fn new(profile: &ModelProfile, prompt: impl Into<String>) -> Self {
        Self {
            reasoning_effort: profile.reasoning_effort,
            profile: profile.clone(),
            prompt: prompt.into(),
            temperature: 0.0,
            top_p: 1.0,
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn key(&self) -> CacheKey {
        CacheKey::of(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cached: bool,
    pub latency: Duration,
    pub key: CacheKey,
}

/// What a backend reports when a send fails.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transient failure ({status:?}): {message}")]
    Transient { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider returned {status}: {body}")]
    Fatal { status: u16, body: String },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("provider error ({status:?}): {body}")]
    Provider { status: Option<u16>, body: String },
    #[error("authentication error: {0}")]
    Auth(String),
    #[error("budget exceeded: cap {cap}, committed {committed}, request estimate {estimate}")]
    BudgetExceeded { cap: Cost, committed: Cost, estimate: Cost },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl From<BackendError> for GatewayError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Transient { status, message } => GatewayError::Provider { status, body: message },
            BackendError::Auth(m) => GatewayError::Auth(m),
            BackendError::Fatal { status, body } => GatewayError::Provider {
                status: Some(status),
                body,
            },
            BackendError::Other(m) => GatewayError::Provider { status: None, body: m },
        }
    }
}

/// Sends one request and returns the raw response body.
pub trait Backend: Send + Sync {
    fn send(&self, request: &CompletionRequest, key: &CacheKey) -> Result<String, BackendError>;
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total tries including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(16)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Text and token usage pulled from a chat-completions body.
pub fn parse_chat_body(body: &str) -> Result<(String, Option<u64>, Option<u64>), GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?
        .to_string();
    let input = v.pointer("/usage/prompt_tokens").and_then(Value::as_u64);
    let output = v.pointer("/usage/completion_tokens").and_then(Value::as_u64);
    Ok((text, input, output))
}

/// Rough token count used when a provider omits usage and for budget estimates.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Cache,
    ledger: Ledger,
    limiter: RateLimiter,
    retry: RetryPolicy,
    budget_cap: Option<Cost>,
    provider_calls: AtomicUsize,
    per_profile_calls: Mutex<BTreeMap<String, usize>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: Cache) -> Self {
        Self {
            backend,
            cache,
            ledger: Ledger::default(),
            limiter: RateLimiter::default(),
            retry: RetryPolicy::default(),
            budget_cap: None,
            provider_calls: AtomicUsize::new(0),
            per_profile_calls: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_budget_cap(mut self, cap: Option<Cost>) -> Self {
        self.budget_cap = cap;
        self
    }

    /// Number of requests that actually reached the backend (retries included).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    /// Successful uncached completions per profile name.
    pub fn completions_by_profile(&self) -> BTreeMap<String, usize> {
        self.per_profile_calls.lock().unwrap().clone()
    }

    pub fn ledger_rows(&self) -> Vec<LedgerRow> {
        self.ledger.rows()
    }

    pub fn ledger_report(&self) -> CostReport {
        self.ledger.report()
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        let key = req.key();
        if let Some(body) = self.cache.get(&key)? {
            let (text, input, output) = parse_chat_body(&body)?;
            let input_tokens = input.unwrap_or_else(|| estimate_tokens(&req.prompt));
            let output_tokens = output.unwrap_or_else(|| estimate_tokens(&text));
            self.ledger.record(&req.profile, input_tokens, output_tokens, true);
            return Ok(Completion {
                text,
                input_tokens,
                output_tokens,
                cached: true,
                latency: Duration::ZERO,
                key,
            });
        }

        let estimate = Cost::of(&req.profile, estimate_tokens(&req.prompt), req.profile.max_output_tokens as u64);
        self.ledger.reserve(self.budget_cap, estimate)?;
        let outcome = self.send_with_retry(req, &key);
        let result = outcome.and_then(|(body, latency)| {
            let (text, input, output) = parse_chat_body(&body)?;
            self.cache.put(&key, &body)?;
            Ok((text, input, output, latency))
        });

        match result {
            Ok((text, input, output, latency)) => {
                let input_tokens = input.unwrap_or_else(|| estimate_tokens(&req.prompt));
                let output_tokens = output.unwrap_or_else(|| estimate_tokens(&text));
                self.ledger.settle(estimate);
                self.ledger.record(&req.profile, input_tokens, output_tokens, false);
                *self
                    .per_profile_calls
                    .lock()
                    .unwrap()
                    .entry(req.profile.name.clone())
                    .or_default() += 1;
                Ok(Completion {
                    text,
                    input_tokens,
                    output_tokens,
                    cached: false,
                    latency,
                    key,
                })
            }
            Err(e) => {
                self.ledger.settle(estimate);
                Err(e)
            }
        }
    }

    fn send_with_retry(&self, req: &CompletionRequest, key: &CacheKey) -> Result<(String, Duration), GatewayError> {
        let mut last = None;
        for attempt in 0..self.retry.max_attempts.max(1) {
            if attempt > 0 {
                let delay = self.retry.delay(attempt - 1);
                tracing::debug!(profile = %req.profile.name, attempt, ?delay, "retrying transient failure");
                std::thread::sleep(delay);
            }
            self.limiter.acquire(&req.profile);
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            let started = Instant::now();
            match self.backend.send(req, key) {
                Ok(body) => return Ok((body, started.elapsed())),
                Err(e @ BackendError::Transient { .. }) => last = Some(e),
                Err(e) => return Err(e.into()),
            }
        }
        Err(last.expect("at least one attempt").into())
    }
}
