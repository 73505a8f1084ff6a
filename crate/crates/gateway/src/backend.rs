use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{LlmRequest, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("credential rejected: {0}")]
    Auth(String),
    #[error("rate limited (429)")]
    RateLimited,
    #[error("server status {0}")]
    Status(u16),
    #[error("timeout")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    /// Misconfiguration that retrying cannot fix.
    #[error("{0}")]
    Fatal(String),
}

/// One completion source. `sample` is 0 for the first request of a prompt
/// and counts up for resamples.
pub trait Backend: Send + Sync {
    fn call(&self, req: &LlmRequest, sample: u32) -> Result<String, BackendError>;

    fn describe(&self) -> String;
}

#[derive(Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model_name: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("endpoint", &self.endpoint)
            .field("model_name", &self.model_name)
            .field("api_key", &"<redacted>")
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl HttpConfig {
    /// Reads endpoint, model and credential from the environment. The model
    /// may be overridden by the caller.
    pub fn from_env(model_override: Option<&str>) -> Result<Self, crate::GatewayError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let api_key = var(ENV_API_KEY)
            .ok_or_else(|| crate::GatewayError::AuthError(format!("{ENV_API_KEY} is not set")))?;
        let endpoint = var(ENV_ENDPOINT)
            .ok_or_else(|| crate::GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model_name = model_override
            .map(str::to_string)
            .or_else(|| var(ENV_MODEL))
            .ok_or_else(|| crate::GatewayError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(HttpConfig {
            endpoint,
            model_name,
            api_key,
            timeout: Duration::from_secs(120),
        })
    }
}

/// Chat-completions JSON over HTTP(S).
#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { config, agent }
    }
}

pub(crate) fn classify_status(status: u16) -> Option<BackendError> {
    match status {
        200..=299 => None,
        401 | 403 => Some(BackendError::Auth(format!("status {status}"))),
        429 => Some(BackendError::RateLimited),
        408 | 500..=599 => Some(BackendError::Status(status)),
        other => Some(BackendError::Fatal(format!("unexpected status {other}"))),
    }
}

impl Backend for HttpBackend {
    fn call(&self, req: &LlmRequest, _sample: u32) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &req.model_name,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        };
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout,
                ureq::Error::BadUri(u) => BackendError::Fatal(format!("bad endpoint {u}")),
                other => BackendError::Transport(other.to_string()),
            })?;
        if let Some(err) = classify_status(response.status().as_u16()) {
            return Err(err);
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }

    fn describe(&self) -> String {
        format!("http {} ({})", self.config.endpoint, self.config.model_name)
    }
}

/// A recorded completion. Several lines with one fingerprint are the
/// successive samples for that prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub fingerprint: String,
    pub raw_text: String,
}

/// Replays recorded completions by fingerprint. Sample `n` gets the `n`-th
/// recorded line, or the last one when fewer were recorded.
#[derive(Debug, Default)]
pub struct FixtureBackend {
    entries: HashMap<String, Vec<String>>,
    source: String,
}

impl FixtureBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        for e in entries {
            map.entry(e.fingerprint).or_default().push(e.raw_text);
        }
        FixtureBackend {
            entries: map,
            source: "inline".into(),
        }
    }

    pub fn read<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let mut backend = Self::read(std::io::BufReader::new(std::fs::File::open(path)?))?;
        backend.source = path.display().to_string();
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for FixtureBackend {
    fn call(&self, req: &LlmRequest, sample: u32) -> Result<String, BackendError> {
        let fp = req.fingerprint();
        let samples = self
            .entries
            .get(&fp)
            .ok_or_else(|| BackendError::Fatal(format!("no recorded completion for fingerprint {fp}")))?;
        Ok(samples[(sample as usize).min(samples.len() - 1)].clone())
    }

    fn describe(&self) -> String {
        format!("fixture {}", self.source)
    }
}

type StubFn = dyn Fn(&LlmRequest, u32) -> Result<String, BackendError> + Send + Sync;

/// Completions computed by a closure.
pub struct StubBackend {
    f: Box<StubFn>,
}

impl StubBackend {
    pub fn new(f: impl Fn(&LlmRequest, u32) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        StubBackend { f: Box::new(f) }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_, _| Ok(text.clone()))
    }
}

impl Backend for StubBackend {
    fn call(&self, req: &LlmRequest, sample: u32) -> Result<String, BackendError> {
        (self.f)(req, sample)
    }

    fn describe(&self) -> String {
        "stub".into()
    }
}

/// Wraps a backend and fails a deterministic fraction of calls with a
/// transient 503. Whether the `n`-th call fails depends only on the seed
/// and `n`.
pub struct FaultInjector<B> {
    inner: B,
    rate: f64,
    seed: u64,
    calls: AtomicU64,
    injected: AtomicU64,
}

impl<B: Backend> FaultInjector<B> {
    pub fn new(inner: B, rate: f64, seed: u64) -> Self {
        FaultInjector {
            inner,
            rate,
            seed,
            calls: AtomicU64::new(0),
            injected: AtomicU64::new(0),
        }
    }

    pub fn injected(&self) -> u64 {
        self.injected.load(Ordering::SeqCst)
    }

    fn should_fail(&self, n: u64) -> bool {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(n.to_le_bytes());
        let digest = h.finalize();
        let x = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        (x as f64 / u64::MAX as f64) < self.rate
    }
}

impl<B: Backend> Backend for FaultInjector<B> {
    fn call(&self, req: &LlmRequest, sample: u32) -> Result<String, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.should_fail(n) {
            self.injected.fetch_add(1, Ordering::SeqCst);
            return Err(BackendError::Status(503));
        }
        self.inner.call(req, sample)
    }

    fn describe(&self) -> String {
        format!("{} with {:.0}% injected faults", self.inner.describe(), self.rate * 100.0)
    }
}

impl<B: Backend> Backend for std::sync::Arc<B> {
    fn call(&self, req: &LlmRequest, sample: u32) -> Result<String, BackendError> {
        (**self).call(req, sample)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classification() {
        assert_eq!(classify_status(200), None);
        assert!(matches!(classify_status(401), Some(BackendError::Auth(_))));
        assert_eq!(classify_status(429), Some(BackendError::RateLimited));
        assert_eq!(classify_status(502), Some(BackendError::Status(502)));
        assert!(matches!(classify_status(404), Some(BackendError::Fatal(_))));
    }

    #[test]
    fn fixture_samples_advance_then_stick() {
        let req = LlmRequest::new("p", "m");
        let fp = req.fingerprint();
        let backend = FixtureBackend::from_entries(["first", "second"].map(|t| FixtureEntry {
            fingerprint: fp.clone(),
            raw_text: t.into(),
        }));
        assert_eq!(backend.call(&req, 0).unwrap(), "first");
        assert_eq!(backend.call(&req, 1).unwrap(), "second");
        assert_eq!(backend.call(&req, 7).unwrap(), "second");
        assert!(matches!(backend.call(&LlmRequest::new("q", "m"), 0), Err(BackendError::Fatal(_))));
    }

    #[test]
    fn credential_is_redacted() {
        let config = HttpConfig {
            endpoint: "https://example.invalid/v1/chat/completions".into(),
            model_name: "m".into(),
            api_key: "sk-secret".into(),
            timeout: Duration::from_secs(1),
        };
        let shown = format!("{:?}", HttpBackend::new(config));
        assert!(!shown.contains("sk-secret"));
        assert!(shown.contains("<redacted>"));
    }

    #[test]
    fn fault_injection_is_reproducible() {
        let pattern = |seed| {
            let f = FaultInjector::new(StubBackend::fixed("x"), 0.3, seed);
            let req = LlmRequest::new("p", "m");
            (0..50).map(|_| f.call(&req, 0).is_err()).collect::<Vec<_>>()
        };
        assert_eq!(pattern(4), pattern(4));
        let fails = pattern(4).iter().filter(|f| **f).count();
        assert!((5..=25).contains(&fails), "{fails}");
    }
}
