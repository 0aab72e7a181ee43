//! Model backends.
//!
//! The pipeline talks to a chat-completion model through the [`Backend`]
//! trait. Three implementations ship here:
//!
//! * [`HttpBackend`] — an OpenAI-style `/v1/chat/completions` endpoint
//!   (llama.cpp server, Ollama's compatibility route, a hosted API).
//! * [`ReplayBackend`] — serves responses from a recorded store, keyed by a
//!   digest of the request. Runs are byte-identical and need no network.
//! * [`RecordingBackend`] — wraps another backend and appends every
//!   successful exchange to a store file for later replay.
//!
//! Requests are content-addressed: `sha256(system_prompt ‖ 0x00 ‖
//! user_message)`. The NUL separator keeps distinct (system, user) pairs
//! from colliding under plain concatenation.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One chat exchange: a fixed system prompt plus the user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_message: String,
}

/// Sampling and transport parameters for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
    pub top_k: u32,
    pub top_p: f64,
    pub timeout: Duration,
    /// Additional attempts after a transport failure or 5xx response.
    pub max_retries: u32,
}

impl GenerationConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: 1.0,
            seed: 42,
            top_k: 10,
            top_p: 0.5,
            timeout: Duration::from_secs(120),
            max_retries: 2,
        }
    }
}

/// Hex digest identifying a request in stores and error messages.
pub fn request_digest(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.system_prompt.as_bytes());
    hasher.update([0u8]);
    hasher.update(request.user_message.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("{backend} backend: transport failure for request {digest}: {message}")]
    Transport {
        backend: &'static str,
        digest: String,
        message: String,
    },
    #[error("{backend} backend: bad response for request {digest}: {message}")]
    Protocol {
        backend: &'static str,
        digest: String,
        message: String,
    },
    #[error("replay store has no response for request {digest}")]
    ReplayMiss { digest: String },
    #[error("store {path}: {message}")]
    Store { path: String, message: String },
}

/// A chat-completion model. Implementations must be shareable across the
/// worker pool.
pub trait Backend: Send + Sync {
    fn complete(
        &self,
        request: &ChatRequest,
        config: &GenerationConfig,
    ) -> Result<String, BackendError>;

    /// Short name used in errors and the run manifest.
    fn kind(&self) -> &'static str;
}

// ---------------------------------------------------------------------------
// HTTP

pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Connect to an OpenAI-style server at `base_url` (no trailing slash
    /// needed), without authentication.
    pub fn new(base_url: impl Into<String>) -> Result<Self, BackendError> {
        Self::with_api_key(base_url, None)
    }

    /// Like [`HttpBackend::new`], reading a bearer token from the
    /// `ROS_API_KEY` environment variable when it is set.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, BackendError> {
        Self::with_api_key(base_url, std::env::var("ROS_API_KEY").ok())
    }

    pub fn with_api_key(
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Transport {
                backend: "http",
                digest: String::new(),
                message: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    /// Check that the server answers at all (`GET /v1/models`). Any HTTP
    /// response counts as reachable; only transport failures are errors.
    pub fn preflight(&self) -> Result<(), BackendError> {
        let url = format!("{}/v1/models", self.base_url);
        let mut req = self.client.get(&url).timeout(Duration::from_secs(10));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        req.send().map(|_| ()).map_err(|e| BackendError::Transport {
            backend: "http",
            digest: String::new(),
            message: format!("preflight {url} failed: {e}"),
        })
    }

    fn attempt(
        &self,
        request: &ChatRequest,
        config: &GenerationConfig,
        digest: &str,
    ) -> Result<String, BackendError> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let body = build_request_body(request, config);
        let mut req = self.client.post(&url).timeout(config.timeout).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| BackendError::Transport {
            backend: "http",
            digest: digest.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError::Transport {
            backend: "http",
            digest: digest.to_string(),
            message: format!("reading response body: {e}"),
        })?;
        if !status.is_success() {
            return Err(BackendError::Protocol {
                backend: "http",
                digest: digest.to_string(),
                message: format!("HTTP {status}: {}", truncate_for_error(&text)),
            });
        }
        parse_chat_response(&text).map_err(|message| BackendError::Protocol {
            backend: "http",
            digest: digest.to_string(),
            message,
        })
    }
}

impl Backend for HttpBackend {
    fn complete(
        &self,
        request: &ChatRequest,
        config: &GenerationConfig,
    ) -> Result<String, BackendError> {
        let digest = request_digest(request);
        let mut last_err = None;
        for attempt in 0..=config.max_retries {
            match self.attempt(request, config, &digest) {
                Ok(content) => return Ok(content),
                // Transport failures and server-side (5xx) errors are worth
                // retrying; client-side rejections are not.
                Err(err @ BackendError::Transport { .. }) => last_err = Some(err),
                Err(err @ BackendError::Protocol { .. }) if is_server_error(&err) => {
                    last_err = Some(err)
                }
                Err(err) => return Err(err),
            }
            if attempt < config.max_retries {
                std::thread::sleep(Duration::from_millis(200 * (attempt as u64 + 1)));
            }
        }
        Err(last_err.expect("at least one attempt ran"))
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}

fn is_server_error(err: &BackendError) -> bool {
    matches!(err, BackendError::Protocol { message, .. } if message.starts_with("HTTP 5"))
}

fn truncate_for_error(body: &str) -> String {
    const LIMIT: usize = 200;
    if body.chars().count() <= LIMIT {
        body.to_string()
    } else {
        let cut: String = body.chars().take(LIMIT).collect();
        format!("{cut}…")
    }
}

/// Request body for the chat-completions route, sampling parameters included.
pub fn build_request_body(request: &ChatRequest, config: &GenerationConfig) -> serde_json::Value {
    serde_json::json!({
        "model": config.model,
        "messages": [
            {"role": "system", "content": request.system_prompt},
            {"role": "user", "content": request.user_message},
        ],
        "temperature": config.temperature,
        "seed": config.seed,
        "top_k": config.top_k,
        "top_p": config.top_p,
    })
}

/// Extract `choices[0].message.content` from a chat-completions response.
pub fn parse_chat_response(body: &str) -> Result<String, String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(|s| s.to_string())
        .ok_or_else(|| "response has no choices[0].message.content string".to_string())
}

// ---------------------------------------------------------------------------
// Replay / record

/// One line of a store file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreRecord {
    digest: String,
    request: ChatRequest,
    response: String,
}

/// Serves recorded responses; never touches the network.
#[derive(Debug)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    /// Load a store file (JSON Lines). Each record's digest is recomputed
    /// from the stored request; a mismatch means the store was edited or
    /// corrupted and is rejected. When a digest appears twice, the later
    /// record wins (re-recordings append).
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let store_err = |message: String| BackendError::Store {
            path: path.display().to_string(),
            message,
        };
        let raw = fs::read_to_string(path).map_err(|e| store_err(e.to_string()))?;
        let mut responses = HashMap::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord = serde_json::from_str(line)
                .map_err(|e| store_err(format!("line {}: {e}", idx + 1)))?;
            let expected = request_digest(&record.request);
            if record.digest != expected {
                return Err(store_err(format!(
                    "line {}: digest {} does not match its request (expected {})",
                    idx + 1,
                    record.digest,
                    expected
                )));
            }
            responses.insert(record.digest, record.response);
        }
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(
        &self,
        request: &ChatRequest,
        _config: &GenerationConfig,
    ) -> Result<String, BackendError> {
        let digest = request_digest(request);
        self.responses
            .get(&digest)
            .cloned()
            .ok_or(BackendError::ReplayMiss { digest })
    }

    fn kind(&self) -> &'static str {
        "replay"
    }
}

/// Wraps another backend and appends each successful exchange to a store
/// file that [`ReplayBackend`] can later serve.
pub struct RecordingBackend {
    inner: Box<dyn Backend>,
    path: String,
    sink: Mutex<fs::File>,
}

impl RecordingBackend {
    /// Record through `inner` into `path`, appending if the file exists.
    pub fn create(inner: Box<dyn Backend>, path: &Path) -> Result<Self, BackendError> {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Store {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(Self {
            inner,
            path: path.display().to_string(),
            sink: Mutex::new(file),
        })
    }
}

impl Backend for RecordingBackend {
    fn complete(
        &self,
        request: &ChatRequest,
        config: &GenerationConfig,
    ) -> Result<String, BackendError> {
        let response = self.inner.complete(request, config)?;
        let record = StoreRecord {
            digest: request_digest(request),
            request: request.clone(),
            response: response.clone(),
        };
        let line = serde_json::to_string(&record).expect("store record serializes");
        let mut sink = self.sink.lock().expect("store sink lock");
        writeln!(sink, "{line}")
            .and_then(|_| sink.flush())
            .map_err(|e| BackendError::Store {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        Ok(response)
    }

    fn kind(&self) -> &'static str {
        "record"
    }
}
