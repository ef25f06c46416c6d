//! Model traffic: chat threads with memory, image generation, providers.
//!
//! Every chat request carries the thread's system message, all remaining
//! turns and the new user message. A turn is appended only after the
//! provider answers, so a failed call leaves the thread untouched.

mod config;
mod mock;
mod recorder;
mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use cultiverse_core::digest::sha256_hex;
use cultiverse_core::{Message, PromptEnvelope, Role};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use config::{ConfigError, ProviderConfig, ProviderKind};
pub use mock::{placeholder_image, MockProvider, MockScript};
pub use recorder::{RecordedRequest, Recorder};
pub use remote::RemoteProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    SourceExploration,
    Transfer,
    Extrapolation,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::SourceExploration, Scope::Transfer, Scope::Extrapolation];

    pub fn token(self) -> &'static str {
        match self {
            Scope::SourceExploration => "source_exploration",
            Scope::Transfer => "transfer",
            Scope::Extrapolation => "extrapolation",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scope::ALL.into_iter().find(|x| x.token() == s).ok_or_else(|| format!("unknown scope {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub id: String,
    pub prompt_hash: String,
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationThread {
    pub id: String,
    pub scope: Scope,
    pub system_message: String,
    pub turns: Vec<Turn>,
    /// Counter for turn ids; never reused, even after deletions.
    pub next_turn: u64,
}

impl ConversationThread {
    pub fn new(id: impl Into<String>, scope: Scope) -> Self {
        ConversationThread { id: id.into(), scope, system_message: String::new(), turns: Vec::new(), next_turn: 0 }
    }

    pub fn turn(&self, id: &str) -> Option<&Turn> {
        self.turns.iter().find(|t| t.id == id)
    }

    /// Messages sent for `envelope` on this thread. The envelope's system
    /// message replaces the thread's for this and later requests.
    pub fn request_messages(&self, envelope: &PromptEnvelope) -> Vec<Message> {
        let system = envelope.system_text().unwrap_or(&self.system_message);
        let mut out = Vec::with_capacity(self.turns.len() * 2 + 2);
        if !system.is_empty() {
            out.push(Message { role: Role::System, text: system.to_string() });
        }
        for t in &self.turns {
            out.push(Message { role: Role::User, text: t.user.clone() });
            out.push(Message { role: Role::Assistant, text: t.assistant.clone() });
        }
        out.push(Message { role: Role::User, text: envelope.user_text().unwrap_or_default().to_string() });
        out
    }

    /// Removes both sides of a turn.
    pub fn delete_turn(&mut self, turn_id: &str) -> Result<Turn, GatewayError> {
        let pos = self
            .turns
            .iter()
            .position(|t| t.id == turn_id)
            .ok_or_else(|| GatewayError::UnknownTurn(turn_id.to_string()))?;
        Ok(self.turns.remove(pos))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt_hash: String,
    pub template_id: String,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRequest {
    pub prompt_hash: String,
    pub prompt: String,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedImage {
    pub bytes: Vec<u8>,
    /// File extension without the dot, e.g. `svg`.
    pub extension: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider refused: {0}")]
    Refused(String),
    #[error("no scripted reply for prompt {0}")]
    ScriptedMiss(String),
}

#[async_trait]
pub trait Provider: Send + Sync {
    async fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError>;
    async fn image(&self, request: &ImageRequest) -> Result<GeneratedImage, ProviderError>;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("provider timed out after {attempts} attempt(s)")]
    ProviderTimeout { attempts: u32 },
    #[error("provider refused the request: {0}")]
    ProviderRefused(String),
    #[error("mock script has no reply for prompt {0}")]
    ScriptedMiss(String),
    #[error("unknown turn {0}")]
    UnknownTurn(String),
    #[error("unknown image result {0}")]
    UnknownResult(String),
    #[error("cannot store image artifact: {0}")]
    Artifact(#[from] std::io::Error),
}

impl From<ProviderError> for GatewayError {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::Timeout => GatewayError::ProviderTimeout { attempts: 1 },
            ProviderError::Refused(m) => GatewayError::ProviderRefused(m),
            ProviderError::ScriptedMiss(h) => GatewayError::ScriptedMiss(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageResult {
    pub id: String,
    pub prompt_hash: String,
    /// Prompt text, kept so regeneration can re-issue it unchanged.
    pub prompt: String,
    /// Artifact path relative to the artifact root.
    pub image_ref: String,
    pub index: u32,
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    recorder: Recorder,
    max_retries: u32,
    timeout: Duration,
    permits: Semaphore,
    artifacts: PathBuf,
    images: Mutex<BTreeMap<String, ImageResult>>,
    next_image: AtomicU64,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, artifacts: impl Into<PathBuf>) -> Self {
        Gateway {
            provider,
            recorder: Recorder::memory(),
            max_retries: 2,
            timeout: Duration::from_secs(30),
            permits: Semaphore::new(4),
            artifacts: artifacts.into(),
            images: Mutex::new(BTreeMap::new()),
            next_image: AtomicU64::new(1),
        }
    }

    pub fn from_config(config: &ProviderConfig, artifacts: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let provider = config.build_provider()?;
        let recorder = match &config.recorder {
            Some(path) => Recorder::to_file(path).map_err(|e| ConfigError::Recorder(path.clone(), e))?,
            None => Recorder::memory(),
        };
        Ok(Gateway::new(provider, artifacts)
            .with_retries(config.max_retries)
            .with_timeout(Duration::from_secs_f64(config.timeout_s))
            .with_max_in_flight(config.max_in_flight)
            .with_recorder(recorder))
    }

    pub fn with_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.permits = Semaphore::new(n.max(1));
        self
    }

    pub fn with_recorder(mut self, recorder: Recorder) -> Self {
        self.recorder = recorder;
        self
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn artifact_root(&self) -> &Path {
        &self.artifacts
    }

    /// Calls `op` until it succeeds, fails with something other than a
    /// timeout, or `max_retries + 1` attempts have been made.
    async fn with_retry<T, F, Fut>(&self, mut op: F) -> Result<T, GatewayError>
    where
        F: FnMut(u32) -> Fut,
        Fut: std::future::Future<Output = Result<T, ProviderError>>,
    {
        let _permit = self.permits.acquire().await.expect("semaphore is never closed");
        let mut attempt = 0;
        loop {
            let outcome = match tokio::time::timeout(self.timeout, op(attempt)).await {
                Ok(r) => r,
                Err(_) => Err(ProviderError::Timeout),
            };
            attempt += 1;
            match outcome {
                Ok(v) => return Ok(v),
                Err(ProviderError::Timeout) if attempt <= self.max_retries => {
                    tracing::warn!(attempt, "provider timeout, retrying");
                }
                Err(ProviderError::Timeout) => return Err(GatewayError::ProviderTimeout { attempts: attempt }),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Sends `envelope` on `thread` and appends the exchange on success.
    pub async fn chat(&self, thread: &mut ConversationThread, envelope: &PromptEnvelope) -> Result<String, GatewayError> {
        let request = ChatRequest {
            prompt_hash: envelope.content_hash.clone(),
            template_id: envelope.template_id.clone(),
            messages: thread.request_messages(envelope),
        };
        let reply = self
            .with_retry(|attempt| {
                self.recorder.record_chat(&request, attempt);
                self.provider.chat(&request)
            })
            .await?;
        if let Some(system) = envelope.system_text() {
            thread.system_message = system.to_string();
        }
        let id = format!("{}-t{}", thread.id, thread.next_turn);
        thread.next_turn += 1;
        thread.turns.push(Turn {
            id,
            prompt_hash: envelope.content_hash.clone(),
            user: envelope.user_text().unwrap_or_default().to_string(),
            assistant: reply.clone(),
        });
        Ok(reply)
    }

    pub async fn generate_image(&self, envelope: &PromptEnvelope) -> Result<ImageResult, GatewayError> {
        let id = format!("img-{:04}", self.next_image.fetch_add(1, Ordering::SeqCst));
        self.render_image(id, envelope.content_hash.clone(), envelope.flattened(), 0).await
    }

    /// Re-issues the identical prompt with the next generation index.
    pub async fn regenerate(&self, result_id: &str) -> Result<ImageResult, GatewayError> {
        let current = self.image(result_id).ok_or_else(|| GatewayError::UnknownResult(result_id.to_string()))?;
        self.render_image(current.id, current.prompt_hash, current.prompt, current.index + 1).await
    }

    pub fn delete_image(&self, result_id: &str) -> Result<ImageResult, GatewayError> {
        self.images
            .lock()
            .expect("image registry poisoned")
            .remove(result_id)
            .ok_or_else(|| GatewayError::UnknownResult(result_id.to_string()))
    }

    pub fn image(&self, result_id: &str) -> Option<ImageResult> {
        self.images.lock().expect("image registry poisoned").get(result_id).cloned()
    }

    /// Registers a result recovered from persistent storage.
    pub fn restore_image(&self, result: ImageResult) {
        if let Some(n) = result.id.strip_prefix("img-").and_then(|n| n.parse::<u64>().ok()) {
            self.next_image.fetch_max(n + 1, Ordering::SeqCst);
        }
        self.images.lock().expect("image registry poisoned").insert(result.id.clone(), result);
    }

    async fn render_image(
        &self,
        id: String,
        prompt_hash: String,
        prompt: String,
        index: u32,
    ) -> Result<ImageResult, GatewayError> {
        let request = ImageRequest { prompt_hash, prompt, index };
        let image = self
            .with_retry(|attempt| {
                self.recorder.record_image(&request, attempt);
                self.provider.image(&request)
            })
            .await?;
        let image_ref = self.store_artifact(&image)?;
        let result = ImageResult { id, prompt_hash: request.prompt_hash, prompt: request.prompt, image_ref, index };
        self.images.lock().expect("image registry poisoned").insert(result.id.clone(), result.clone());
        Ok(result)
    }

    /// Writes the bytes under `images/<sha256>.<ext>` and returns that path.
    fn store_artifact(&self, image: &GeneratedImage) -> std::io::Result<String> {
        let name = format!("images/{}.{}", sha256_hex(&image.bytes), image.extension);
        let path = self.artifacts.join(&name);
        if !path.exists() {
            std::fs::create_dir_all(path.parent().expect("artifact path has a parent"))?;
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, &image.bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(name)
    }
}
