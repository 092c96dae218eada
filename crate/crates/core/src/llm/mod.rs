//! Chat-completion providers: a live OpenAI-compatible HTTP client, a
//! scripted fixture provider and a trace-replay provider.

mod http;
mod redact;
mod scripted;

use std::path::PathBuf;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use http::{backoff_delay, HttpProvider};
pub use redact::{Redactor, REDACTED};
pub use scripted::{ReplayProvider, ScriptedProvider};

pub const DEFAULT_API_KEY_ENV: &str = "FHIRFORGE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Sampling parameters; `extra` is passed through to the wire request as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: None, extra: Map::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the key, never the key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_owned()
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderConfig {
    Http(HttpProviderConfig),
    #[serde(rename_all = "snake_case")]
    Scripted {
        script: PathBuf,
    },
    #[serde(rename_all = "snake_case")]
    Replay {
        trace: PathBuf,
    },
}

impl ProviderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProviderConfig::Http(_) => "http",
            ProviderConfig::Scripted { .. } => "scripted",
            ProviderConfig::Replay { .. } => "replay",
        }
    }

    /// Instantiates a fresh provider; scripted and replay cursors start at 0.
    pub fn build(&self) -> Result<Box<dyn Provider>, ProviderError> {
        Ok(match self {
            ProviderConfig::Http(c) => Box::new(HttpProvider::from_env(c.clone())?),
            ProviderConfig::Scripted { script } => Box::new(ScriptedProvider::load(script)?),
            ProviderConfig::Replay { trace } => Box::new(ReplayProvider::load(trace)?),
        })
    }
}

/// One request/response pair, already redacted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub attempt: u32,
    pub request: Value,
    pub status: Option<u16>,
    pub response: Value,
    pub timestamp: chrono::DateTime<chrono::Utc>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("API key environment variable {env} is not set")]
    MissingKey { env: String },
    #[error("provider returned {status} after {attempts} attempt(s): {snippet}")]
    Status { status: u16, attempts: u32, snippet: String },
    #[error("provider deadline of {0:?} exceeded")]
    Deadline(Duration),
    #[error("provider transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected provider response: {0}")]
    InvalidResponse(String),
    #[error("script exhausted after {served} replies")]
    ScriptUnderrun { served: usize },
    #[error("cannot load script: {0}")]
    Script(String),
    #[error("cannot load replay trace: {0}")]
    Replay(String),
}

#[async_trait]
pub trait Provider: Send {
    fn name(&self) -> &str;

    async fn complete(&mut self, messages: &[ChatMessage], params: &ModelParams) -> Result<String, ProviderError>;

    /// Drains the request/response records collected since the last call.
    fn take_exchanges(&mut self) -> Vec<ExchangeRecord> {
        Vec::new()
    }
}
