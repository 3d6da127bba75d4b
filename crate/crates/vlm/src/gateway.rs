//! Transport, retry policy, response cache and audit log.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use symwm_core::labeling::write_atomic;

use crate::prompts::{ImageRef, PromptBundle, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Base address of a chat-completions style API, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub max_in_flight: usize,
    pub retries: usize,
    /// First backoff delay; doubles on every further retry.
    pub backoff_ms: u64,
    pub temperature: f64,
    /// Atoms per labeling request; `None` sends them all at once.
    pub batch_size: Option<usize>,
    pub timeout_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            token_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 500,
            temperature: 0.0,
            batch_size: None,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("gave up after {attempts} attempts: {last}")]
    TransientExhausted { attempts: usize, last: String },
    #[error("malformed endpoint: {0}")]
    MalformedEndpoint(String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("response cache: {0}")]
    Cache(String),
}

/// Sends one prompt and returns the model's text.
pub trait Transport: Send + Sync {
    fn send(&self, bundle: &PromptBundle, cfg: &GatewayConfig) -> Result<String, TransportError>;
}

pub fn validate_endpoint(base_url: &str) -> Result<(), GatewayError> {
    let rest = base_url
        .strip_prefix("https://")
        .or_else(|| base_url.strip_prefix("http://"))
        .ok_or_else(|| GatewayError::MalformedEndpoint(format!("{base_url:?} is not an http(s) address")))?;
    let host = rest.split('/').next().unwrap_or("");
    if host.is_empty() || host.contains(char::is_whitespace) {
        return Err(GatewayError::MalformedEndpoint(format!("{base_url:?} has no host")));
    }
    Ok(())
}

fn image_url(img: &ImageRef) -> String {
    let p = &img.path;
    if p.starts_with("http://") || p.starts_with("https://") || p.starts_with("data:") {
        return p.clone();
    }
    match fs::read(p) {
        Ok(bytes) => {
            let mime = match Path::new(p).extension().and_then(|e| e.to_str()) {
                Some("jpg" | "jpeg") => "image/jpeg",
                Some("webp") => "image/webp",
                _ => "image/png",
            };
            format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes))
        }
        // Unresolvable references are passed through for the server to reject.
        Err(_) => p.clone(),
    }
}

fn content(text: &str, images: &[ImageRef]) -> Value {
    let mut parts = Vec::new();
    for img in images {
        parts.push(json!({"type": "text", "text": img.heading}));
        parts.push(json!({"type": "image_url", "image_url": {"url": image_url(img)}}));
    }
    parts.push(json!({"type": "text", "text": text}));
    Value::Array(parts)
}

/// Chat-completions request body for `bundle`.
pub fn wire_request(bundle: &PromptBundle, cfg: &GatewayConfig) -> Value {
    let mut messages: Vec<Value> = bundle
        .history
        .iter()
        .map(|t| match t.role {
            Role::User => json!({"role": "user", "content": content(&t.text, &t.images)}),
            Role::Assistant => json!({"role": "assistant", "content": t.text}),
        })
        .collect();
    messages.push(json!({"role": "user", "content": content(&bundle.text, &bundle.images)}));
    json!({"model": cfg.model, "temperature": cfg.temperature, "messages": messages})
}

pub struct HttpTransport {
    url: String,
    token: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    /// Validates the endpoint and resolves the token before anything is sent.
    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, GatewayError> {
        validate_endpoint(&cfg.base_url)?;
        let token = std::env::var(&cfg.token_env)
            .ok()
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| GatewayError::AuthFailure(format!("environment variable {} is not set", cfg.token_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            token,
            agent,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, bundle: &PromptBundle, cfg: &GatewayConfig) -> Result<String, TransportError> {
        let body = wire_request(bundle, cfg).to_string();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.token))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(TransportError::Transient(format!("HTTP {status}"))),
            _ => return Err(TransportError::Fatal(format!("HTTP {status}: {text}"))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Fatal(format!("bad JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| TransportError::Fatal("response has no message content".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub schema_version: u32,
    pub model: String,
    pub temperature: f64,
    pub request_digest: String,
    pub response: String,
}

/// SHA-256 over model, temperature and the serialized bundle.
pub fn cache_key(bundle: &PromptBundle, cfg: &GatewayConfig) -> String {
    let mut h = Sha256::new();
    h.update(cfg.model.as_bytes());
    h.update([0]);
    h.update(cfg.temperature.to_bits().to_le_bytes());
    h.update(serde_json::to_vec(bundle).expect("serializable"));
    hex::encode(h.finalize())
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.free.lock().unwrap();
        while *n == 0 {
            n = self.cv.wait(n).unwrap();
        }
        *n -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    pub cfg: GatewayConfig,
    transport: Arc<dyn Transport>,
    cache_dir: Option<PathBuf>,
    audit: Option<Mutex<File>>,
    slots: Slots,
    sleep: Sleeper,
    sent: AtomicUsize,
    key_locks: Mutex<std::collections::HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig, transport: Arc<dyn Transport>) -> Self {
        let n = cfg.max_in_flight.max(1);
        Self {
            cfg,
            transport,
            cache_dir: None,
            audit: None,
            slots: Slots {
                free: Mutex::new(n),
                cv: Condvar::new(),
            },
            sleep: Box::new(std::thread::sleep),
            sent: AtomicUsize::new(0),
            key_locks: Mutex::new(Default::default()),
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Appends one JSON object per event to `path`.
    pub fn with_audit(mut self, path: impl AsRef<Path>) -> std::io::Result<Self> {
        if let Some(dir) = path.as_ref().parent() {
            fs::create_dir_all(dir)?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(f));
        Ok(self)
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, f: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(f);
        self
    }

    /// Requests actually handed to the transport.
    pub fn network_calls(&self) -> usize {
        self.sent.load(Ordering::Relaxed)
    }

    fn log(&self, event: &str, key: &str, attempt: usize, detail: &str) {
        let Some(f) = &self.audit else { return };
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let line = json!({
            "unix_ms": ms as u64,
            "event": event,
            "model": self.cfg.model,
            "key": key,
            "attempt": attempt,
            "detail": detail,
        });
        let mut f = f.lock().unwrap();
        // Audit failures never fail a request.
        let _ = writeln!(f, "{line}");
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn cached(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.cache_path(key)?).ok()?;
        let rec: CachedResponse = serde_json::from_str(&text).ok()?;
        (rec.request_digest == key).then_some(rec.response)
    }

    pub fn request(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let key = cache_key(bundle, &self.cfg);
        if let Some(r) = self.cached(&key) {
            self.log("cache_hit", &key, 0, "");
            return Ok(r);
        }
        let lock = self.key_locks.lock().unwrap().entry(key.clone()).or_default().clone();
        let _single_writer = lock.lock().unwrap();
        if let Some(r) = self.cached(&key) {
            self.log("cache_hit", &key, 0, "");
            return Ok(r);
        }
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 2).min(20));
                (self.sleep)(Duration::from_millis(delay));
            }
            let result = {
                let _slot = self.slots.acquire();
                self.sent.fetch_add(1, Ordering::Relaxed);
                self.transport.send(bundle, &self.cfg)
            };
            match result {
                Ok(text) => {
                    self.log("success", &key, attempt, "");
                    self.store(&key, &text)?;
                    return Ok(text);
                }
                Err(TransportError::Transient(e)) => {
                    self.log("transient", &key, attempt, &e);
                    last = e;
                }
                Err(TransportError::Auth(e)) => {
                    self.log("auth_failure", &key, attempt, &e);
                    return Err(GatewayError::AuthFailure(e));
                }
                Err(TransportError::Fatal(e)) => {
                    self.log("fatal", &key, attempt, &e);
                    return Err(GatewayError::Request(e));
                }
            }
        }
        self.log("exhausted", &key, attempts, &last);
        Err(GatewayError::TransientExhausted { attempts, last })
    }

    fn store(&self, key: &str, response: &str) -> Result<(), GatewayError> {
        let Some(path) = self.cache_path(key) else {
            return Ok(());
        };
        let rec = CachedResponse {
            schema_version: 1,
            model: self.cfg.model.clone(),
            temperature: self.cfg.temperature,
            request_digest: key.to_string(),
            response: response.to_string(),
        };
        write_atomic(&path, &serde_json::to_string_pretty(&rec).expect("serializable"))
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))
    }
}
