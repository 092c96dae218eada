use std::path::Path;

use async_trait::async_trait;

use super::{ChatMessage, ModelParams, Provider, ProviderError};
use crate::agent::SessionTrace;

/// Returns canned replies in order and errors once they run out.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    replies: Vec<String>,
    cursor: usize,
}

impl ScriptedProvider {
    pub fn new(replies: Vec<String>) -> Self {
        Self { replies, cursor: 0 }
    }

    /// Script file: a JSON array of assistant reply strings.
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        let replies: Vec<String> =
            serde_json::from_str(&text).map_err(|e| ProviderError::Script(format!("{}: {e}", path.display())))?;
        Ok(Self::new(replies))
    }

    pub fn remaining(&self) -> usize {
        self.replies.len() - self.cursor
    }
}

#[async_trait]
impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    async fn complete(&mut self, _messages: &[ChatMessage], _params: &ModelParams) -> Result<String, ProviderError> {
        let reply =
            self.replies.get(self.cursor).cloned().ok_or(ProviderError::ScriptUnderrun { served: self.cursor })?;
        self.cursor += 1;
        Ok(reply)
    }
}

/// Serves the assistant outputs recorded in a trace, in order, regardless of
/// the messages it is sent.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    inner: ScriptedProvider,
}

impl ReplayProvider {
    pub fn from_trace(trace: &SessionTrace) -> Self {
        Self { inner: ScriptedProvider::new(trace.steps.iter().map(|s| s.model_output.clone()).collect()) }
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let trace = SessionTrace::read(path).map_err(|e| ProviderError::Replay(e.to_string()))?;
        Ok(Self::from_trace(&trace))
    }
}

#[async_trait]
impl Provider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    async fn complete(&mut self, messages: &[ChatMessage], params: &ModelParams) -> Result<String, ProviderError> {
        self.inner.complete(messages, params).await.map_err(|e| match e {
            ProviderError::ScriptUnderrun { served } => {
                ProviderError::Replay(format!("trace has only {served} recorded outputs"))
            }
            other => other,
        })
    }
}
