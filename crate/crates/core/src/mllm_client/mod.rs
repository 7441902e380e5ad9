//! Backend-agnostic MLLM calls, token usage and cost accounting.
//!
//! Three backends implement [`Backend`]: a live HTTP client, a replay of a
//! recorded transcript, and a ground-truth oracle with corruption knobs.
//! [`MllmClient`] wraps one of them with transport retries and rate limits.

mod live;
mod oracle;
mod pricing;
mod replay;

pub use live::{Dialect, LiveBackend, LiveConfig};
pub use oracle::{estimate_tokens, Corruption, Injection, InjectionKind, OracleBackend, IMAGE_TOKEN_ESTIMATE};
pub use pricing::{compute_cost, compute_input_cost, format_usd, ModelRate, PricingTable};
pub use replay::{ReplayBackend, TranscriptRecord};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine as _;
use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{ContactVector, PartSegmentation};
use crate::prompt_engine::Stage;
use crate::visual_prompt::{encode_jpeg, JPEG_QUALITY};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend format error: {0}")]
    BackendFormat(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("image encode error: {0}")]
    Encode(String),
    #[error("backend config error: {0}")]
    Config(String),
}

impl ClientError {
    pub fn transport(message: impl Into<String>, retryable: bool) -> Self {
        ClientError::Transport { message: message.into(), retryable }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// A base64-encoded image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub media_type: String,
    pub base64: String,
}

/// Bookkeeping carried alongside a request. Never sent over the wire; the
/// oracle and replay backends key their answers on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTag {
    pub sample_id: String,
    pub stage: Stage,
    /// 1-based attempt number within the stage.
    pub attempt: u32,
    /// Parts the request asks about: the selected parts for the dense stage,
    /// empty otherwise.
    pub parts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MllmRequest {
    pub model: String,
    pub messages: Vec<Message>,
    /// Images in prompt order ("Image 1", "Image 2", ...).
    pub images: Vec<ImagePayload>,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub tag: RequestTag,
}

impl MllmRequest {
    /// Concatenated message text.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, rhs: Usage) -> Usage {
        Usage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MllmResponse {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// Something that answers requests. One call is one transport attempt.
pub trait Backend: Send + Sync {
    fn send(&self, request: &MllmRequest) -> Result<MllmResponse, ClientError>;
    fn name(&self) -> &'static str;
}

/// Encodes a raster as a base64 JPEG at the payload quality.
pub fn encode_image(image: &RgbImage) -> Result<ImagePayload, ClientError> {
    let bytes = encode_jpeg(image, JPEG_QUALITY).map_err(|e| ClientError::Encode(e.to_string()))?;
    Ok(ImagePayload {
        media_type: "image/jpeg".to_string(),
        base64: base64::engine::general_purpose::STANDARD.encode(bytes),
    })
}

// ---------------------------------------------------------------------------
// Limits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_in_flight: 8, requests_per_minute: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportRetry {
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for TransportRetry {
    fn default() -> Self {
        Self { attempts: 3, backoff_ms: 500 }
    }
}

/// Counting semaphore plus a minimum spacing between request starts.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max_in_flight: usize,
    spacing: Option<Duration>,
    next_start: Mutex<Option<Instant>>,
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter lock");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    fn new(limits: &Limits) -> Self {
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max_in_flight: limits.max_in_flight.max(1),
            spacing: limits
                .requests_per_minute
                .filter(|&r| r > 0)
                .map(|r| Duration::from_secs_f64(60.0 / r as f64)),
            next_start: Mutex::new(None),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        drop(n);
        if let Some(spacing) = self.spacing {
            let wait = {
                let mut next = self.next_start.lock().expect("limiter lock");
                let now = Instant::now();
                let start = next.map_or(now, |t| t.max(now));
                *next = Some(start + spacing);
                start - now
            };
            thread::sleep(wait);
        }
        Permit(self)
    }
}

/// A backend plus transport retries, limits and pricing. Shareable across
/// worker threads.
pub struct MllmClient {
    backend: Box<dyn Backend>,
    limiter: Limiter,
    retry: TransportRetry,
    pub model: String,
    pub pricing: PricingTable,
    pub max_output_tokens: u32,
    pub temperature: f64,
}

impl MllmClient {
    pub fn new(backend: Box<dyn Backend>, model: impl Into<String>, pricing: PricingTable) -> Self {
        Self {
            backend,
            limiter: Limiter::new(&Limits::default()),
            retry: TransportRetry::default(),
            model: model.into(),
            pricing,
            max_output_tokens: 8192,
            temperature: 0.0,
        }
    }

    pub fn with_limits(mut self, limits: &Limits) -> Self {
        self.limiter = Limiter::new(limits);
        self
    }

    pub fn with_retry(mut self, retry: TransportRetry) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// Sends with up to `retry.attempts` tries on retryable transport errors,
    /// doubling the backoff each time. Other errors return immediately.
    pub fn send(&self, request: &MllmRequest) -> Result<MllmResponse, ClientError> {
        let attempts = self.retry.attempts.max(1);
        let mut backoff = Duration::from_millis(self.retry.backoff_ms);
        let mut tried = 0;
        loop {
            tried += 1;
            let result = {
                let _permit = self.limiter.acquire();
                self.backend.send(request)
            };
            match result {
                Err(ClientError::Transport { message, retryable: true }) if tried < attempts => {
                    log::warn!(
                        "transport error for {} {} attempt {} (try {tried}/{attempts}): {message}",
                        request.tag.sample_id,
                        request.tag.stage,
                        request.tag.attempt
                    );
                    thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(ClientError::Transport { message, retryable }) => {
                    return Err(ClientError::Transport {
                        message: format!("{message} (after {tried} tries)"),
                        retryable,
                    })
                }
                other => return other,
            }
        }
    }

    pub fn request(&self, tag: RequestTag, text: String, images: Vec<ImagePayload>) -> MllmRequest {
        MllmRequest {
            model: self.model.clone(),
            messages: vec![Message { role: Role::User, text }],
            images,
            max_output_tokens: self.max_output_tokens,
            temperature: self.temperature,
            tag,
        }
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Oracle,
    Replay,
}

/// Backend config file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub pricing: PricingTable,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub transport: TransportRetry,
    #[serde(default)]
    pub corruption: Corruption,
    #[serde(default)]
    pub dialect: Dialect,
    /// Replay source, JSON lines of [`TranscriptRecord`].
    #[serde(default)]
    pub transcript: Option<PathBuf>,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    "gpt-5.5".to_string()
}

fn default_key_env() -> String {
    "MLLM_API_KEY".to_string()
}

fn default_max_tokens() -> u32 {
    8192
}

fn default_timeout() -> u64 {
    120
}

impl BackendConfig {
    pub fn oracle() -> Self {
        Self {
            kind: BackendKind::Oracle,
            endpoint: None,
            model: default_model(),
            pricing: PricingTable::default(),
            limits: Limits::default(),
            transport: TransportRetry::default(),
            corruption: Corruption::default(),
            dialect: Dialect::default(),
            transcript: None,
            api_key_env: default_key_env(),
            max_output_tokens: default_max_tokens(),
            temperature: 0.0,
            timeout_secs: default_timeout(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ClientError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ClientError::Config(e.to_string()))?;
        cfg.pricing.validate()?;
        cfg.corruption.validate()?;
        if cfg.kind == BackendKind::Live && cfg.endpoint.is_none() {
            return Err(ClientError::Config("live backend requires an endpoint".into()));
        }
        if cfg.kind == BackendKind::Replay && cfg.transcript.is_none() {
            return Err(ClientError::Config("replay backend requires a transcript path".into()));
        }
        Ok(cfg)
    }

    /// Loads a config; a relative transcript path resolves against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(t), Some(dir)) = (&cfg.transcript, path.parent()) {
            if t.is_relative() {
                cfg.transcript = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    /// Stable hash of the config's JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Ground truth and segmentation the oracle answers from.
pub struct OracleSource {
    pub seg: Arc<PartSegmentation>,
    pub truth: HashMap<String, ContactVector>,
    pub seed: u64,
}

/// Builds the configured client. `oracle` is required for the oracle kind.
pub fn build_client(cfg: &BackendConfig, oracle: Option<OracleSource>) -> Result<MllmClient, ClientError> {
    let backend: Box<dyn Backend> = match cfg.kind {
        BackendKind::Oracle => {
            let src = oracle.ok_or_else(|| ClientError::Config("oracle backend needs ground truth".into()))?;
            Box::new(OracleBackend::new(src.seg, src.truth, cfg.corruption.clone(), src.seed)?)
        }
        BackendKind::Replay => {
            let path = cfg.transcript.as_ref().expect("checked on parse");
            Box::new(ReplayBackend::load(path)?)
        }
        BackendKind::Live => {
            let key = std::env::var(&cfg.api_key_env).map_err(|_| {
                ClientError::Auth(format!("environment variable {} is not set", cfg.api_key_env))
            })?;
            Box::new(LiveBackend::new(LiveConfig {
                endpoint: cfg.endpoint.clone().expect("checked on parse"),
                dialect: cfg.dialect,
                api_key: key,
                timeout: Duration::from_secs(cfg.timeout_secs),
            }))
        }
    };
    let mut client = MllmClient::new(backend, cfg.model.clone(), cfg.pricing.clone())
        .with_limits(&cfg.limits)
        .with_retry(cfg.transport.clone());
    client.max_output_tokens = cfg.max_output_tokens;
    client.temperature = cfg.temperature;
    Ok(client)
}
