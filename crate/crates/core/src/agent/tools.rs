use std::fmt::Write;
use std::sync::Arc;

use async_trait::async_trait;
use serde_json::Value;
use thiserror::Error;

use crate::terminology::{find_valueset, TermQuery, Terminology, ValueSetRef};

pub const TOOL_ERROR_PREFIX: &str = "TOOL ERROR:";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("{0}")]
    Failed(String),
}

#[async_trait]
pub trait Tool: Send + Sync {
    fn name(&self) -> &str;

    async fn call(&self, arguments: &Value) -> Result<String, ToolError>;
}

/// Terminology lookup exposed to the model as `search`.
pub struct SearchTool {
    terminology: Terminology,
    valuesets: Vec<ValueSetRef>,
    limit: usize,
}

impl SearchTool {
    pub fn new(terminology: Terminology, valuesets: Vec<ValueSetRef>, limit: usize) -> Self {
        Self { terminology, valuesets, limit }
    }
}

fn string_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, ToolError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::InvalidArguments(format!("`{key}` must be a string")))
}

#[async_trait]
impl Tool for SearchTool {
    fn name(&self) -> &str {
        "search"
    }

    async fn call(&self, args: &Value) -> Result<String, ToolError> {
        let text = string_arg(args, "text")?;
        let vs_key = string_arg(args, "valueset")?;
        let limit = match args.get("limit") {
            None => self.limit,
            Some(v) => v
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| ToolError::InvalidArguments("`limit` must be a positive integer".into()))?,
        };
        let Some(vs) = find_valueset(&self.valuesets, vs_key) else {
            let known: Vec<&str> = self.valuesets.iter().map(|v| v.name.as_str()).collect();
            return Err(ToolError::InvalidArguments(format!(
                "unknown value set `{vs_key}`; known: {}",
                known.join(", ")
            )));
        };
        let query = TermQuery::new(text, vs.clone(), limit).map_err(|e| ToolError::InvalidArguments(e.to_string()))?;
        let outcome = self.terminology.search(&query).await.map_err(|e| ToolError::Failed(e.to_string()))?;

        let mut out = format!(
            "{} match(es) for \"{}\" in {} (backend={})",
            outcome.matches.len(),
            query.text,
            vs.name,
            outcome.backend
        );
        for m in &outcome.matches {
            let _ = write!(out, "\n{} | {} | {:.3}", m.code, m.display, m.score);
        }
        for w in &outcome.warnings {
            let _ = write!(out, "\nwarning: {w}");
        }
        Ok(out)
    }
}

/// Name-addressed set of tools available to one run.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: Vec<Arc<dyn Tool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tool: Arc<dyn Tool>) -> Self {
        self.tools.retain(|t| t.name() != tool.name());
        self.tools.push(tool);
        self
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.name().to_owned()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.iter().find(|t| t.name() == name)
    }

    /// Runs a tool and renders the result as an observation. Failures never
    /// escape; they come back prefixed with [`TOOL_ERROR_PREFIX`].
    pub async fn invoke(&self, name: &str, arguments: &Value) -> String {
        let Some(tool) = self.get(name) else {
            return format!("{TOOL_ERROR_PREFIX} no tool named `{name}`");
        };
        match tool.call(arguments).await {
            Ok(out) if out.trim().is_empty() => format!("{name}: (no output)"),
            Ok(out) => out,
            Err(e) => format!("{TOOL_ERROR_PREFIX} {e}"),
        }
    }
}
