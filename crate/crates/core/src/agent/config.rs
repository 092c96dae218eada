use serde::{Deserialize, Serialize};

use crate::fhir::SUPPORTED_TYPES;
use crate::llm::ModelParams;
use crate::terminology::{default_valuesets, ValueSetRef, DEFAULT_LIMIT, MAX_LIMIT};

use super::AgentError;

pub const DEFAULT_MAX_STEPS: usize = 12;
pub const DEFAULT_PROMPT_BUDGET: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub resource_types: Vec<String>,
    pub valuesets: Vec<ValueSetRef>,
    pub model: ModelParams,
    /// BCP-47 tag of the input documents.
    pub language: Option<String>,
    /// Upper bound on the system prompt, in estimated tokens.
    pub prompt_token_budget: usize,
    pub search_limit: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            resource_types: SUPPORTED_TYPES.iter().map(|s| s.to_string()).collect(),
            valuesets: default_valuesets(),
            model: ModelParams::default(),
            language: Some("de".into()),
            prompt_token_budget: DEFAULT_PROMPT_BUDGET,
            search_limit: DEFAULT_LIMIT,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if self.max_steps < 2 {
            return bad(format!("max_steps must be at least 2, got {}", self.max_steps));
        }
        if self.resource_types.is_empty() {
            return bad("resource_types is empty".into());
        }
        for (i, t) in self.resource_types.iter().enumerate() {
            if !SUPPORTED_TYPES.contains(&t.as_str()) {
                return bad(format!("resource type {t} is not supported ({})", SUPPORTED_TYPES.join(", ")));
            }
            if self.resource_types[..i].contains(t) {
                return bad(format!("resource type {t} listed twice"));
            }
        }
        if self.search_limit == 0 || self.search_limit > MAX_LIMIT {
            return bad(format!("search_limit must be in 1..={MAX_LIMIT}"));
        }
        if self.valuesets.iter().any(|v| v.name.is_empty() || v.url.is_empty()) {
            return bad("every value set needs a name and a url".into());
        }
        Ok(())
    }

    pub fn allows(&self, resource_type: &str) -> bool {
        self.resource_types.iter().any(|t| t == resource_type)
    }
}
