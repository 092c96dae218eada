//! One translate run end to end: config, tools, provider, agent, artifacts.
//! The CLI and the service both go through here.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{
    replay_trace, Agent, AgentConfig, AgentError, AgentOutcome, AgentStatus, ReplayReport, SearchTool, SessionTrace,
    StepObserver, ToolRegistry, TraceReadError,
};
use crate::fhir::{
    has_errors, parse_document, serialize_bundle_pretty, validate_document, ParseError, ValidationIssue,
};
use crate::llm::{Provider, ProviderConfig, ProviderError, Redactor};
use crate::terminology::{
    find_valueset, Backend, ConceptMatch, LocalTerminology, RemoteTerminology, SearchMode, TermQuery, Terminology,
    TerminologyError, DEFAULT_TIMEOUT,
};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const BUNDLE_PRETTY_FILE: &str = "bundle.pretty.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const EXCHANGES_FILE: &str = "exchanges.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminologyConfig {
    pub mode: SearchMode,
    pub server_url: Option<String>,
    pub timeout_secs: u64,
    /// Directory of `<valueset name>.tsv` files replacing the built-in snapshots.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for TerminologyConfig {
    fn default() -> Self {
        Self { mode: SearchMode::Local, server_url: None, timeout_secs: DEFAULT_TIMEOUT.as_secs(), snapshot_dir: None }
    }
}

impl TerminologyConfig {
    pub fn build(&self, agent: &AgentConfig) -> Result<Terminology, RunError> {
        let local = match &self.snapshot_dir {
            Some(dir) => LocalTerminology::load_dir(dir, &agent.valuesets)?,
            None => LocalTerminology::builtin(),
        };
        let remote = self
            .server_url
            .as_ref()
            .map(|u| RemoteTerminology::with_timeout(u.clone(), Duration::from_secs(self.timeout_secs)));
        if self.mode != SearchMode::Local && remote.is_none() {
            return Err(RunError::Config("terminology mode needs a server_url".into()));
        }
        Ok(Terminology { mode: self.mode, local: Arc::new(local), remote })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub terminology: TerminologyConfig,
    pub provider: ProviderConfig,
    /// Hash the document wherever it would appear in the exchanges log.
    #[serde(default)]
    pub privacy: bool,
}

impl RunConfig {
    pub fn new(provider: ProviderConfig) -> Self {
        Self { agent: AgentConfig::default(), terminology: TerminologyConfig::default(), provider, privacy: false }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies a JSON merge patch; `null` members reset optional fields.
    /// A provider object naming a different `kind` replaces the provider.
    pub fn with_overrides(&self, overrides: &Value) -> Result<Self, RunError> {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let kind = overrides.pointer("/provider/kind");
        if kind.is_some() && kind != base.pointer("/provider/kind") {
            base["provider"] = Value::Null;
        }
        json_patch::merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| RunError::Config(format!("bad config override: {e}")))
    }

    pub fn snapshot(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn tools(&self) -> Result<ToolRegistry, RunError> {
        let terminology = self.terminology.build(&self.agent)?;
        let search = SearchTool::new(terminology, self.agent.valuesets.clone(), self.agent.search_limit);
        Ok(ToolRegistry::new().with(Arc::new(search)))
    }

    pub fn agent(&self) -> Result<Agent, RunError> {
        Ok(Agent::new(self.agent.clone(), self.tools()?)?.with_trace_config(self.snapshot()))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Io(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Terminology(#[from] TerminologyError),
    #[error(transparent)]
    Trace(#[from] TraceReadError),
    #[error("unknown value set `{name}`; known: {}", known.join(", "))]
    UnknownValueSet { name: String, known: Vec<String> },
}

pub fn new_run_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

/// Builds agent and provider, so setup failures surface before a run starts.
pub fn prepare(config: &RunConfig) -> Result<(Agent, Box<dyn Provider>), RunError> {
    Ok((config.agent()?, config.provider.build()?))
}

/// Runs the agent over one document.
pub async fn translate(
    document: &str,
    config: &RunConfig,
    observer: StepObserver<'_>,
) -> Result<AgentOutcome, RunError> {
    let (agent, mut provider) = prepare(config)?;
    Ok(agent.run_observed(document, provider.as_mut(), observer).await)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub document_id: String,
    pub config: Value,
    pub trace_path: PathBuf,
    pub bundle_path: Option<PathBuf>,
    pub status: AgentStatus,
    pub steps: usize,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

/// Writes trace, exchanges, bundle (on success) and manifest into `dir`.
pub fn write_artifacts(
    dir: &Path,
    run_id: &str,
    document_id: &str,
    document: &str,
    config: &RunConfig,
    outcome: &AgentOutcome,
    elapsed: Duration,
) -> Result<RunManifest, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    let trace_path = dir.join(TRACE_FILE);
    write(&trace_path, &outcome.trace.to_jsonl())?;

    let redactor =
        if config.privacy { Redactor::default().with_document_privacy(document) } else { Redactor::default() };
    let mut exchanges = String::new();
    for x in &outcome.exchanges {
        let v = redactor.redact(&serde_json::to_value(x).expect("exchange serializes"));
        exchanges.push_str(&v.to_string());
        exchanges.push('\n');
    }
    write(&dir.join(EXCHANGES_FILE), &exchanges)?;

    let bundle_path = match (&outcome.bundle, &outcome.bundle_json) {
        (Some(bundle), Some(json)) => {
            let path = dir.join(BUNDLE_FILE);
            write(&path, json)?;
            if let Ok(pretty) = serialize_bundle_pretty(bundle) {
                write(&dir.join(BUNDLE_PRETTY_FILE), &pretty)?;
            }
            Some(path)
        }
        _ => None,
    };

    let manifest = RunManifest {
        run_id: run_id.to_owned(),
        document_id: document_id.to_owned(),
        config: config.snapshot(),
        trace_path,
        bundle_path,
        status: outcome.status,
        steps: outcome.trace.steps.len(),
        duration_ms: elapsed.as_millis() as u64,
        error: outcome.error.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<ValidationIssue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax_error: Option<SyntaxError>,
}

/// Parses and validates a resource or Bundle given as JSON text.
pub fn validate_text(text: &str) -> ValidationReport {
    match parse_document(text) {
        Ok(parsed) => {
            let mut issues = parsed.warnings;
            issues.extend(validate_document(&parsed.value));
            ValidationReport { valid: !has_errors(&issues), issues, syntax_error: None }
        }
        Err(ParseError::Syntax { offset, message }) => {
            ValidationReport { valid: false, issues: Vec::new(), syntax_error: Some(SyntaxError { offset, message }) }
        }
        Err(e) => ValidationReport { valid: false, issues: e.issues(), syntax_error: None },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub valueset: String,
    #[serde(flatten)]
    pub concept: ConceptMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub backend: Backend,
    pub matches: Vec<SearchHit>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Searches one value set, or all configured ones merged by score.
pub async fn search(
    terminology: &TerminologyConfig,
    agent: &AgentConfig,
    text: &str,
    valueset: Option<&str>,
    limit: usize,
) -> Result<SearchReport, RunError> {
    let targets = match valueset {
        Some(key) => match find_valueset(&agent.valuesets, key) {
            Some(vs) => vec![vs.clone()],
            None => {
                return Err(RunError::UnknownValueSet {
                    name: key.to_owned(),
                    known: agent.valuesets.iter().map(|v| v.name.clone()).collect(),
                })
            }
        },
        None => agent.valuesets.clone(),
    };
    let backend_set = terminology.build(agent)?;
    let mut hits = Vec::new();
    let mut warnings = Vec::new();
    let mut backend = Backend::Local;
    for vs in targets {
        let query = TermQuery::new(text, vs.clone(), limit)?;
        let outcome = backend_set.search(&query).await?;
        backend = outcome.backend;
        warnings.extend(outcome.warnings);
        hits.extend(outcome.matches.into_iter().map(|m| (vs.name.clone(), m)));
    }
    // Same order as `rank`: score descending, then code.
    hits.sort_by(|(_, a), (_, b)| b.score.total_cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
    let matches = hits.into_iter().take(limit).map(|(valueset, concept)| SearchHit { valueset, concept }).collect();
    Ok(SearchReport { backend, matches, warnings })
}

/// Rebuilds the agent from a trace header. Headers written by this module
/// hold a full [`RunConfig`]; a bare [`AgentConfig`] gets local terminology.
pub fn agent_for_trace(trace: &SessionTrace) -> Result<Agent, RunError> {
    let config = &trace.header.config;
    if let Ok(run) = serde_json::from_value::<RunConfig>(config.clone()) {
        return run.agent();
    }
    let agent: AgentConfig = serde_json::from_value(config.clone())
        .map_err(|e| RunError::Config(format!("trace header config is not recognised: {e}")))?;
    let tools = RunConfig { agent: agent.clone(), ..RunConfig::new(ProviderConfig::Replay { trace: PathBuf::new() }) }
        .tools()?;
    Ok(Agent::new(agent, tools)?.with_trace_config(config.clone()))
}

pub async fn replay(trace: &SessionTrace, observer: StepObserver<'_>) -> Result<ReplayReport, RunError> {
    let agent = agent_for_trace(trace)?;
    Ok(replay_trace(&agent, trace, observer).await)
}
