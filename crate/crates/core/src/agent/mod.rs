//! Thought-Action-Observation loop that turns a clinical letter into a
//! validated FHIR Bundle.

mod action;
mod config;
mod prompt;
mod replay;
mod run;
mod tools;
mod trace;

use thiserror::Error;

pub use action::{parse_action, render_action, Action, ActionParser, BLOCK_CLOSE, BLOCK_OPEN};
pub use config::{AgentConfig, DEFAULT_MAX_STEPS, DEFAULT_PROMPT_BUDGET};
pub use prompt::{build_system_prompt, estimate_tokens};
pub use replay::{replay_trace, Divergence, ReplayReport};
pub use run::{Agent, AgentOutcome, StepObserver, WorkingSet};
pub use tools::{SearchTool, Tool, ToolError, ToolRegistry, TOOL_ERROR_PREFIX};
pub use trace::{AgentStatus, AgentStep, SessionTrace, TraceEnd, TraceHeader, TraceReadError, TRACE_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
}
