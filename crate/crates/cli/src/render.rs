use fhirforge_core::agent::{Action, AgentStatus, AgentStep};

use crate::{EXIT_BUDGET, EXIT_OK, EXIT_PROVIDER};

const MAX_ARGS: usize = 72;

pub fn clip(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        return s.to_owned();
    }
    let cut: String = s.chars().take(max - 3).collect();
    format!("{cut}...")
}

/// One line per step: action, then the first observation line.
pub fn step_summary(step: &AgentStep) -> String {
    let action = match &step.action {
        Action::ToolCall { name, arguments } => format!("{name} {}", clip(&arguments.to_string(), MAX_ARGS)),
        Action::AddResource { resource, replace } => {
            let rtype = resource.get("resourceType").and_then(|t| t.as_str()).unwrap_or("?");
            match replace {
                Some(n) => format!("add_resource {rtype} (replace #{n})"),
                None => format!("add_resource {rtype}"),
            }
        }
        Action::FinalAnswer => "final_answer".to_owned(),
        Action::Malformed { reason, .. } => format!("malformed ({reason})"),
    };
    let observation = step.observation.lines().next().unwrap_or_default();
    format!("step {:>2}  {action}  =>  {observation}", step.index)
}

pub fn exit_for(status: AgentStatus) -> u8 {
    match status {
        AgentStatus::Success => EXIT_OK,
        AgentStatus::BudgetExhausted => EXIT_BUDGET,
        AgentStatus::ProviderFailure => EXIT_PROVIDER,
    }
}
