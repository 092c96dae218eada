use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use fhirforge_core::pipeline::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "fhirforge",
    version,
    about = "Translate clinical letters into FHIR R4 Bundles with a tool-using agent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the agent over one letter or a whole corpus.
    Translate(TranslateArgs),
    /// Re-run a recorded trace and check that it reproduces.
    Replay(ReplayArgs),
    /// Validate a resource or Bundle file.
    Validate(ValidateArgs),
    /// Look up codes in the value set snapshots or a terminology server.
    Search(SearchArgs),
    /// Diff a prediction against a baseline, or aggregate finished annotations.
    Evaluate(EvaluateArgs),
    /// List the documents of a corpus directory.
    Corpus(CorpusArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

/// Everything that ends up in a [`RunConfig`].
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, env = "FHIRFORGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Use a scripted provider (JSON array of model outputs).
    #[arg(long, env = "FHIRFORGE_SCRIPT", conflicts_with = "base_url")]
    pub script: Option<PathBuf>,
    /// OpenAI-compatible endpoint for the HTTP provider.
    #[arg(long, env = "FHIRFORGE_BASE_URL")]
    pub base_url: Option<String>,
    #[arg(long, env = "FHIRFORGE_MODEL")]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, env = "FHIRFORGE_API_KEY_ENV")]
    pub api_key_env: Option<String>,
    #[arg(long, env = "FHIRFORGE_RETRIES")]
    pub retries: Option<u32>,
    #[arg(long, env = "FHIRFORGE_MAX_STEPS")]
    pub max_steps: Option<usize>,
    /// Comma-separated subset of Patient, Condition, MedicationStatement.
    #[arg(long, env = "FHIRFORGE_RESOURCE_TYPES", value_delimiter = ',')]
    pub resource_types: Option<Vec<String>>,
    #[arg(long, env = "FHIRFORGE_LANGUAGE")]
    pub language: Option<String>,
    /// local, remote or remote-with-fallback.
    #[arg(long, env = "FHIRFORGE_TERMINOLOGY_MODE")]
    pub terminology_mode: Option<String>,
    #[arg(long, env = "FHIRFORGE_TERMINOLOGY_URL")]
    pub terminology_url: Option<String>,
    /// Directory of `<value set>.tsv` snapshots.
    #[arg(long, env = "FHIRFORGE_SNAPSHOT_DIR")]
    pub snapshot_dir: Option<PathBuf>,
    /// Hash the letter wherever it would appear in exchange logs.
    #[arg(long, env = "FHIRFORGE_PRIVACY")]
    pub privacy: bool,
}

fn absolute(path: &PathBuf) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("{}", path.display()))
}

impl RunArgs {
    /// Merge patch holding only what was given on the command line.
    pub fn overrides(&self) -> Result<Value> {
        let mut patch = Map::new();
        let mut agent = Map::new();
        let mut terminology = Map::new();
        if let Some(script) = &self.script {
            patch.insert("provider".into(), json!({"kind": "scripted", "script": absolute(script)?}));
        } else if self.base_url.is_some()
            || self.model.is_some()
            || self.api_key_env.is_some()
            || self.retries.is_some()
        {
            let mut http = Map::new();
            http.insert("kind".into(), json!("http"));
            if let Some(v) = &self.base_url {
                http.insert("base_url".into(), json!(v));
            }
            if let Some(v) = &self.model {
                http.insert("model".into(), json!(v));
            }
            if let Some(v) = &self.api_key_env {
                http.insert("api_key_env".into(), json!(v));
            }
            if let Some(v) = self.retries {
                http.insert("retries".into(), json!(v));
            }
            patch.insert("provider".into(), Value::Object(http));
        }
        if let Some(v) = self.max_steps {
            agent.insert("max_steps".into(), json!(v));
        }
        if let Some(v) = &self.resource_types {
            agent.insert("resource_types".into(), json!(v));
        }
        if let Some(v) = &self.language {
            agent.insert("language".into(), json!(v));
        }
        if let Some(v) = &self.terminology_mode {
            terminology.insert("mode".into(), json!(v));
        }
        if let Some(v) = &self.terminology_url {
            terminology.insert("server_url".into(), json!(v));
        }
        if let Some(v) = &self.snapshot_dir {
            terminology.insert("snapshot_dir".into(), json!(absolute(v)?));
        }
        if self.privacy {
            patch.insert("privacy".into(), json!(true));
        }
        if !agent.is_empty() {
            patch.insert("agent".into(), Value::Object(agent));
        }
        if !terminology.is_empty() {
            patch.insert("terminology".into(), Value::Object(terminology));
        }
        Ok(Value::Object(patch))
    }

    pub fn build(&self) -> Result<RunConfig> {
        let overrides = self.overrides()?;
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let Some(provider) = overrides.get("provider") else {
                    bail!("no provider configured: pass --script, --base-url with --model, or --config");
                };
                let provider = serde_json::from_value(provider.clone())
                    .context("incomplete provider flags (--base-url needs --model)")?;
                RunConfig::new(provider)
            }
        };
        Ok(base.with_overrides(&overrides)?)
    }
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Letter to translate.
    #[arg(required_unless_present = "corpus", conflicts_with = "corpus")]
    pub document: Option<PathBuf>,
    /// Translate every document of a corpus directory.
    #[arg(long, env = "FHIRFORGE_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Artifact directory; defaults to `runs/<run id>`.
    #[arg(long, env = "FHIRFORGE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub document_id: Option<String>,
    /// Send the run to a fhirforge service instead of running locally.
    #[arg(long, env = "FHIRFORGE_SERVER")]
    pub server: Option<String>,
    /// Give up polling the service after this many seconds.
    #[arg(long, default_value_t = 900)]
    pub wait_secs: u64,
    /// No step summaries.
    #[arg(long, short)]
    pub quiet: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Multiplier on the recorded inter-step delays; 0 renders instantly.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Write the reconstructed Bundle here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
    #[arg(long, env = "FHIRFORGE_SERVER")]
    pub server: Option<String>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    pub term: String,
    /// Value set name or URL; all value sets when omitted.
    #[arg(long)]
    pub valueset: Option<String>,
    /// local, remote or remote-with-fallback.
    #[arg(long, default_value = "local")]
    pub backend: String,
    #[arg(long, env = "FHIRFORGE_TERMINOLOGY_URL")]
    pub terminology_url: Option<String>,
    #[arg(long, env = "FHIRFORGE_SNAPSHOT_DIR")]
    pub snapshot_dir: Option<PathBuf>,
    #[arg(long, default_value_t = fhirforge_core::terminology::DEFAULT_LIMIT)]
    pub limit: usize,
    #[arg(long, env = "FHIRFORGE_SERVER")]
    pub server: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted Bundle.
    #[arg(long, required_unless_present = "annotations", requires = "baseline")]
    pub pred: Option<PathBuf>,
    /// Human baseline Bundle.
    #[arg(long, required_unless_present = "annotations", requires = "pred")]
    pub baseline: Option<PathBuf>,
    /// Finished annotation file; prints the matrix instead of diffing.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Where the provisional annotation file goes.
    #[arg(long, default_value = "annotations.provisional.jsonl")]
    pub out: PathBuf,
    /// Also write the matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FHIRFORGE_HOST", default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, env = "FHIRFORGE_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "FHIRFORGE_RUNS_DIR", default_value = "runs")]
    pub runs_dir: PathBuf,
    #[arg(long, env = "FHIRFORGE_MAX_CONCURRENT_RUNS", default_value_t = fhirforge_service::DEFAULT_MAX_CONCURRENT_RUNS)]
    pub max_concurrent_runs: usize,
    #[arg(long, default_value_t = fhirforge_service::DEFAULT_RETRY_AFTER_SECS)]
    pub retry_after_secs: u64,
    #[command(flatten)]
    pub run: RunArgs,
}
