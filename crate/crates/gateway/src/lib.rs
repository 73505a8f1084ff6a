//! Chat-completion gateway for the labeling stage.
//!
//! A [`Gateway`] wraps one [`Backend`] with a fingerprint-keyed cache,
//! exponential-backoff retries, a request-rate limit and counters.
//! [`batch_label`] drives render, complete and parse over a corpus.

mod backend;
mod batch;
mod cache;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{Backend, BackendError, FaultInjector, FixtureBackend, FixtureEntry, HttpBackend, HttpConfig, StubBackend};
pub use batch::{batch_label, BatchOutcome, LabelSettings};
pub use cache::ResponseCache;

pub const ENV_ENDPOINT: &str = "MORALFRAME_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "MORALFRAME_LLM_MODEL";
pub const ENV_API_KEY: &str = "MORALFRAME_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, model_name: impl Into<String>) -> Self {
        LlmRequest {
            prompt: prompt.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }

    /// Hex sha256 over (model, prompt, temperature bits); each string is
    /// length-prefixed so field boundaries cannot shift.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.prompt, &self.model_name, self.temperature)
    }
}

pub fn fingerprint(prompt: &str, model_name: &str, temperature: f64) -> String {
    let mut h = Sha256::new();
    for field in [model_name.as_bytes(), prompt.as_bytes()] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field);
    }
    // -0.0 and 0.0 are the same decoding setting
    let t = if temperature == 0.0 { 0.0f64 } else { temperature };
    h.update(t.to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub model_name: String,
    pub latency_ms: u64,
    pub cached: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error after {attempts} attempts: {message}")]
    TransportError { attempts: u32, message: String },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

impl GatewayError {
    /// Errors that make every further request pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(self, GatewayError::AuthError(_) | GatewayError::Config(_) | GatewayError::Cache(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first remote call.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(20)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Minimum spacing between remote calls, shared by all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs(60) / requests
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn unlimited() -> Self {
        Self::per_minute(0)
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock();
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub remote_calls: u64,
    pub retries: u64,
    pub cache_hits: u64,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: RateLimiter,
    remote_calls: AtomicU64,
    retries: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.describe())
            .field("retry", &self.retry)
            .field("stats", &self.stats())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Gateway {
            backend: Box::new(backend),
            cache: ResponseCache::in_memory(),
            retry: RetryPolicy::default(),
            limiter: RateLimiter::unlimited(),
            remote_calls: AtomicU64::new(0),
            retries: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            remote_calls: self.remote_calls.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    pub fn backend_name(&self) -> String {
        self.backend.describe()
    }

    /// First sample for `req`.
    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, GatewayError> {
        self.complete_sample(req, 0)
    }

    /// Sample number `sample` for `req`. Resamples are cached under their own
    /// key so a rerun replays the same sequence.
    pub fn complete_sample(&self, req: &LlmRequest, sample: u32) -> Result<LlmResponse, GatewayError> {
        let key = cache_key(&req.fingerprint(), sample);
        if let Some(raw_text) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(LlmResponse {
                raw_text,
                model_name: req.model_name.clone(),
                latency_ms: 0,
                cached: true,
                created_at: Utc::now(),
            });
        }
        let started = Instant::now();
        let raw_text = self.call_with_retry(req, sample)?;
        if raw_text.trim().is_empty() {
            return Err(GatewayError::EmptyCompletion);
        }
        self.cache.put(&key, &raw_text).map_err(|e| GatewayError::Cache(e.to_string()))?;
        Ok(LlmResponse {
            raw_text,
            model_name: req.model_name.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            cached: false,
            created_at: Utc::now(),
        })
    }

    fn call_with_retry(&self, req: &LlmRequest, sample: u32) -> Result<String, GatewayError> {
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            self.remote_calls.fetch_add(1, Ordering::Relaxed);
            let err = match self.backend.call(req, sample) {
                Ok(text) => return Ok(text),
                Err(BackendError::Auth(m)) => return Err(GatewayError::AuthError(m)),
                Err(BackendError::Fatal(m)) => return Err(GatewayError::Config(m)),
                Err(e) => e,
            };
            attempt += 1;
            if attempt > self.retry.max_retries {
                return Err(match err {
                    BackendError::RateLimited => GatewayError::RateLimited { attempts: attempt },
                    other => GatewayError::TransportError {
                        attempts: attempt,
                        message: other.to_string(),
                    },
                });
            }
            self.retries.fetch_add(1, Ordering::Relaxed);
            log::debug!("retrying after {err} (attempt {attempt})");
            let delay = self.retry.delay(attempt - 1);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        }
    }
}

fn cache_key(fingerprint: &str, sample: u32) -> String {
    if sample == 0 {
        fingerprint.to_string()
    } else {
        format!("{fingerprint}/s{sample}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;
    use std::sync::Arc;

    #[test]
    fn fingerprint_is_a_pure_function_of_its_fields() {
        let a = LlmRequest::new("p", "m");
        let mut b = a.clone();
        b.max_output_tokens = 9;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.temperature = 0.5;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(fingerprint("ab", "c", 0.0), fingerprint("b", "ac", 0.0));
        assert_eq!(fingerprint("p", "m", -0.0), fingerprint("p", "m", 0.0));
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn second_request_is_served_from_cache() {
        let gw = Gateway::new(StubBackend::fixed("Moral Foundation: none"));
        let req = LlmRequest::new("prompt", "m");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(first.raw_text, second.raw_text);
        assert_eq!(gw.stats().remote_calls, 1);
        assert_eq!(gw.stats().cache_hits, 1);
    }

    #[test]
    fn transient_failures_are_retried() {
        let failures = Arc::new(AtomicU32::new(2));
        let f = failures.clone();
        let backend = StubBackend::new(move |_, _| {
            if f.load(Ordering::SeqCst) > 0 {
                f.fetch_sub(1, Ordering::SeqCst);
                Err(BackendError::Status(503))
            } else {
                Ok("ok".into())
            }
        });
        let gw = Gateway::new(backend).with_retry(RetryPolicy::no_delay(3));
        assert_eq!(gw.complete(&LlmRequest::new("p", "m")).unwrap().raw_text, "ok");
        assert_eq!(gw.stats().retries, 2);
        assert_eq!(gw.stats().remote_calls, 3);
    }

    #[test]
    fn retry_budget_is_bounded() {
        let gw = Gateway::new(StubBackend::new(|_, _| Err(BackendError::RateLimited)))
            .with_retry(RetryPolicy::no_delay(2));
        assert_eq!(
            gw.complete(&LlmRequest::new("p", "m")),
            Err(GatewayError::RateLimited { attempts: 3 })
        );
        assert_eq!(gw.stats().remote_calls, 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let gw = Gateway::new(StubBackend::new(|_, _| Err(BackendError::Auth("401".into()))))
            .with_retry(RetryPolicy::no_delay(5));
        assert!(matches!(gw.complete(&LlmRequest::new("p", "m")), Err(GatewayError::AuthError(_))));
        assert_eq!(gw.stats().remote_calls, 1);
    }

    #[test]
    fn blank_completions_are_errors_and_not_cached() {
        let gw = Gateway::new(StubBackend::fixed("  \n"));
        let req = LlmRequest::new("p", "m");
        assert_eq!(gw.complete(&req), Err(GatewayError::EmptyCompletion));
        assert_eq!(gw.complete(&req), Err(GatewayError::EmptyCompletion));
        assert_eq!(gw.stats().remote_calls, 2);
    }

    #[test]
    fn backoff_doubles_up_to_the_cap() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(700),
        };
        let delays: Vec<u128> = (0..5).map(|r| p.delay(r).as_millis()).collect();
        assert_eq!(delays, [100, 200, 400, 700, 700]);
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let limiter = RateLimiter::per_minute(60 * 50);
        let start = Instant::now();
        for _ in 0..4 {
            limiter.acquire();
        }
        // 3 gaps of 20 ms after the first free slot
        assert!(start.elapsed() >= Duration::from_millis(55));
    }
}
