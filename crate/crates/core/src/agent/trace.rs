use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::Action;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentStatus {
    Success,
    BudgetExhausted,
    ProviderFailure,
}

impl AgentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentStatus::Success => "success",
            AgentStatus::BudgetExhausted => "budget-exhausted",
            AgentStatus::ProviderFailure => "provider-failure",
        }
    }
}

impl std::fmt::Display for AgentStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub index: usize,
    pub thought: String,
    /// The raw assistant reply; replay feeds these back verbatim.
    pub model_output: String,
    pub action: Action,
    pub observation: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub document_sha256: String,
    pub config: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub status: AgentStatus,
    pub steps: usize,
    pub bundle_sha256: Option<String>,
    /// Current version of every working-set slot, in ordinal order.
    pub working_set: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct EndLine {
    end: TraceEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub header: TraceHeader,
    pub steps: Vec<AgentStep>,
    pub end: Option<TraceEnd>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceReadError {
    #[error("cannot read trace: {0}")]
    Io(String),
    #[error("trace is truncated: {0}")]
    Truncated(String),
    #[error("trace line {line} is malformed: {message}")]
    Malformed { line: usize, message: String },
}

impl SessionTrace {
    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("header serializes")
    }

    pub fn step_line(step: &AgentStep) -> String {
        serde_json::to_string(step).expect("step serializes")
    }

    pub fn end_line(end: &TraceEnd) -> String {
        serde_json::to_string(&EndLine { end: end.clone() }).expect("end serializes")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for s in &self.steps {
            out.push_str(&Self::step_line(s));
            out.push('\n');
        }
        if let Some(end) = &self.end {
            out.push_str(&Self::end_line(end));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }

    pub fn read(path: &Path) -> Result<Self, TraceReadError> {
        let text = std::fs::read_to_string(path).map_err(|e| TraceReadError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Strict reader. A missing end record or a cut-off final line is
    /// `Truncated`; anything else that does not fit is `Malformed`.
    pub fn parse(text: &str) -> Result<Self, TraceReadError> {
        if text.trim().is_empty() {
            return Err(TraceReadError::Truncated("empty trace".into()));
        }
        let complete_last = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let n = lines.len();
        let malformed = |line: usize, message: String| TraceReadError::Malformed { line, message };

        let mut header = None;
        let mut steps: Vec<AgentStep> = Vec::new();
        let mut end: Option<TraceEnd> = None;
        for (i, raw) in lines.iter().enumerate() {
            let lineno = i + 1;
            let value: Value = match serde_json::from_str(raw) {
                Ok(v) => v,
                Err(e) if i + 1 == n && !complete_last => {
                    return Err(TraceReadError::Truncated(format!("line {lineno} is cut off ({e})")))
                }
                Err(e) => return Err(malformed(lineno, e.to_string())),
            };
            if end.is_some() {
                return Err(malformed(lineno, "content after end record".into()));
            }
            if i == 0 {
                let h: TraceHeader =
                    serde_json::from_value(value).map_err(|e| malformed(lineno, format!("bad header: {e}")))?;
                if h.version != TRACE_VERSION {
                    return Err(malformed(lineno, format!("unsupported trace version {}", h.version)));
                }
                header = Some(h);
                continue;
            }
            if value.get("end").is_some() {
                let e: EndLine =
                    serde_json::from_value(value).map_err(|e| malformed(lineno, format!("bad end record: {e}")))?;
                if e.end.steps != steps.len() {
                    return Err(malformed(
                        lineno,
                        format!("end record counts {} steps, trace has {}", e.end.steps, steps.len()),
                    ));
                }
                end = Some(e.end);
                continue;
            }
            let step: AgentStep =
                serde_json::from_value(value).map_err(|e| malformed(lineno, format!("bad step: {e}")))?;
            if step.index != steps.len() + 1 {
                return Err(malformed(lineno, format!("step index {} out of sequence", step.index)));
            }
            if step.observation.is_empty() {
                return Err(malformed(lineno, "empty observation".into()));
            }
            steps.push(step);
        }
        if end.is_none() {
            return Err(TraceReadError::Truncated(format!("no end record after {} step(s)", steps.len())));
        }
        Ok(Self { header: header.expect("first line handled"), steps, end })
    }
}
