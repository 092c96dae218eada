use serde_json::Value;

use crate::fhir::{
    has_errors, make_bundle, render_issues, resource_from_value, serialize_bundle, sha256_hex, validate, Bundle,
    ParseError, Resource, SUPPORTED_TYPES,
};
use crate::llm::{ChatMessage, ExchangeRecord, Provider};

use super::{
    build_system_prompt, estimate_tokens, Action, ActionParser, AgentConfig, AgentError, AgentStatus, AgentStep,
    SessionTrace, ToolRegistry, TraceEnd, TraceHeader, TRACE_VERSION,
};

/// Append-only resource slots. Replacing a slot appends a new version; the
/// Bundle is built from the latest version of each slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkingSet {
    slots: Vec<Vec<Resource>>,
}

impl WorkingSet {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Latest version at a 1-based ordinal.
    pub fn get(&self, ordinal: usize) -> Option<&Resource> {
        self.slots.get(ordinal.checked_sub(1)?).and_then(|v| v.last())
    }

    pub fn versions(&self, ordinal: usize) -> usize {
        ordinal.checked_sub(1).and_then(|i| self.slots.get(i)).map_or(0, Vec::len)
    }

    pub fn current(&self) -> Vec<Resource> {
        self.slots.iter().filter_map(|v| v.last().cloned()).collect()
    }

    fn push(&mut self, r: Resource) -> usize {
        self.slots.push(vec![r]);
        self.slots.len()
    }

    fn replace(&mut self, ordinal: usize, r: Resource) {
        self.slots[ordinal - 1].push(r);
    }
}

#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub status: AgentStatus,
    /// Present exactly when `status` is success.
    pub bundle: Option<Bundle>,
    /// Canonical compact serialization of `bundle`.
    pub bundle_json: Option<String>,
    pub working_set: WorkingSet,
    pub trace: SessionTrace,
    pub exchanges: Vec<ExchangeRecord>,
    pub error: Option<String>,
}

pub type StepObserver<'a> = &'a mut (dyn FnMut(&AgentStep) + Send);

pub struct Agent {
    config: AgentConfig,
    tools: ToolRegistry,
    parser: ActionParser,
    system_prompt: String,
    trace_config: Value,
}

enum Effect {
    Continue(String),
    Done { observation: String, bundle: Bundle, json: String },
}

impl Agent {
    pub fn new(config: AgentConfig, tools: ToolRegistry) -> Result<Self, AgentError> {
        config.validate()?;
        let system_prompt = build_system_prompt(&config);
        let tokens = estimate_tokens(&system_prompt);
        if tokens > config.prompt_token_budget {
            return Err(AgentError::Config(format!(
                "system prompt needs ~{tokens} tokens, budget is {}",
                config.prompt_token_budget
            )));
        }
        let parser = ActionParser::new(tools.names());
        let trace_config = serde_json::to_value(&config).expect("config serializes");
        Ok(Self { config, tools, parser, system_prompt, trace_config })
    }

    /// Replaces the config snapshot written into the trace header.
    pub fn with_trace_config(mut self, config: Value) -> Self {
        self.trace_config = config;
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub async fn run(&self, document: &str, provider: &mut dyn Provider) -> AgentOutcome {
        self.run_observed(document, provider, &mut |_| {}).await
    }

    pub async fn run_observed(
        &self,
        document: &str,
        provider: &mut dyn Provider,
        observer: StepObserver<'_>,
    ) -> AgentOutcome {
        let header = TraceHeader {
            version: TRACE_VERSION,
            document_sha256: sha256_hex(document),
            config: self.trace_config.clone(),
        };
        let lang = self.config.language.as_deref().map(|l| format!(" ({l})")).unwrap_or_default();
        let mut messages = vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(format!("Clinical document{lang}:\n\n{document}")),
        ];
        let mut ws = WorkingSet::default();
        let mut steps: Vec<AgentStep> = Vec::new();
        let mut status = AgentStatus::BudgetExhausted;
        let mut error = None;
        let mut result = None;

        for index in 1..=self.config.max_steps {
            let output = match provider.complete(&messages, &self.config.model).await {
                Ok(o) => o,
                Err(e) => {
                    tracing::warn!(step = index, error = %e, "provider failed");
                    status = AgentStatus::ProviderFailure;
                    error = Some(e.to_string());
                    break;
                }
            };
            let (thought, action) = self.parser.parse(&output);
            let effect = self.execute(&action, &mut ws).await;
            let observation = match &effect {
                Effect::Continue(o) | Effect::Done { observation: o, .. } => o.clone(),
            };
            let step = AgentStep {
                index,
                thought,
                model_output: output.clone(),
                action,
                observation: observation.clone(),
                timestamp: chrono::Utc::now(),
            };
            observer(&step);
            steps.push(step);
            messages.push(ChatMessage::assistant(output));
            messages.push(ChatMessage::user(format!("Observation:\n{observation}")));
            if let Effect::Done { bundle, json, .. } = effect {
                status = AgentStatus::Success;
                result = Some((bundle, json));
                break;
            }
        }

        let (bundle, bundle_json) = match result {
            Some((b, j)) => (Some(b), Some(j)),
            None => (None, None),
        };
        let end = TraceEnd {
            status,
            steps: steps.len(),
            bundle_sha256: bundle_json.as_deref().map(sha256_hex),
            working_set: ws.current().iter().map(|r| serde_json::to_value(r).expect("resource serializes")).collect(),
            error: error.clone(),
        };
        AgentOutcome {
            status,
            bundle,
            bundle_json,
            working_set: ws,
            trace: SessionTrace { header, steps, end: Some(end) },
            exchanges: provider.take_exchanges(),
            error,
        }
    }

    async fn execute(&self, action: &Action, ws: &mut WorkingSet) -> Effect {
        match action {
            Action::ToolCall { name, arguments } => Effect::Continue(self.tools.invoke(name, arguments).await),
            Action::AddResource { resource, replace } => Effect::Continue(self.add_resource(resource, *replace, ws)),
            Action::Malformed { reason, .. } => Effect::Continue(format!(
                "Malformed action: {reason}. Reply with a thought followed by exactly one block \
                 <<<action {{\"action\": ...}} >>>."
            )),
            Action::FinalAnswer => self.final_answer(ws),
        }
    }

    fn add_resource(&self, value: &Value, replace: Option<usize>, ws: &mut WorkingSet) -> String {
        let rtype = value.get("resourceType").and_then(Value::as_str).unwrap_or_default();
        if !self.config.allows(rtype) {
            let shown = if rtype.is_empty() { "(missing resourceType)" } else { rtype };
            let why = if SUPPORTED_TYPES.contains(&rtype) { "is disabled for this run" } else { "is not supported" };
            return format!(
                "Rejected: resource type {shown} {why}. Allowed: {}.",
                self.config.resource_types.join(", ")
            );
        }

        let mut value = value.clone();
        let ordinal = match replace {
            Some(k) => {
                let Some(old) = ws.get(k) else {
                    return format!("Rejected: replace {k} does not name a stored resource (have {}).", ws.len());
                };
                if old.resource_type() != rtype {
                    return format!(
                        "Rejected: resource #{k} is a {}, cannot replace it with a {rtype}.",
                        old.resource_type()
                    );
                }
                // Keep the id so existing references stay valid.
                value["id"] = Value::String(old.id().unwrap_or_default().to_owned());
                k
            }
            None => {
                let k = ws.len() + 1;
                if value.get("id").is_none() {
                    value["id"] = Value::String(format!("{}-{k}", rtype.to_ascii_lowercase()));
                }
                k
            }
        };

        let (resource, mut issues) = match resource_from_value(&value) {
            Ok(parsed) => {
                let mut issues = parsed.warnings;
                issues.extend(validate(&parsed.value));
                (Some(parsed.value), issues)
            }
            Err(ParseError::Malformed { issues }) => (None, issues),
            Err(e) => (None, e.issues()),
        };
        issues.sort_by(|a, b| a.path.cmp(&b.path));
        let resource = match resource {
            Some(r) if !has_errors(&issues) => r,
            _ => {
                let n = issues.iter().filter(|i| i.is_error()).count();
                return format!("Rejected {rtype}: {n} error(s)\n{}", render_issues(&issues));
            }
        };

        let key = resource.local_reference().unwrap_or_default();
        let clash = (1..=ws.len())
            .filter(|&k| Some(k) != replace)
            .find(|&k| ws.get(k).and_then(Resource::local_reference).as_deref() == Some(key.as_str()));
        if let Some(k) = clash {
            return format!("Rejected {rtype}: id already used by resource #{k} ({key}).");
        }

        let id = resource.id().unwrap_or_default().to_owned();
        let mut obs = match replace {
            Some(k) => {
                ws.replace(k, resource);
                format!("replaced {rtype} #{ordinal} (id={id}, version {})", ws.versions(k))
            }
            None => {
                ws.push(resource);
                format!("added {rtype} #{ordinal} (id={id})")
            }
        };
        if !issues.is_empty() {
            obs.push('\n');
            obs.push_str(&render_issues(&issues));
        }
        obs
    }

    fn final_answer(&self, ws: &WorkingSet) -> Effect {
        if ws.is_empty() {
            return Effect::Continue("Final answer rejected: no resources stored yet. Add resources first.".into());
        }
        let (bundle, issues) = make_bundle(ws.current());
        if has_errors(&issues) {
            return Effect::Continue(format!(
                "Final answer rejected: the Bundle has {} problem(s)\n{}",
                issues.len(),
                render_issues(&issues)
            ));
        }
        match serialize_bundle(&bundle) {
            Ok(json) => Effect::Done {
                observation: format!("Final answer accepted: Bundle with {} entries", bundle.len()),
                bundle,
                json,
            },
            Err(e) => Effect::Continue(format!("Final answer rejected: {e}")),
        }
    }
}
