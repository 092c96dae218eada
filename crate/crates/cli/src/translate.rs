use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};

use fhirforge_client::Client;
use fhirforge_core::agent::{AgentStatus, AgentStep};
use fhirforge_core::api::{RunState, TranslateRequest};
use fhirforge_core::corpus::{load_corpus, CorpusDocument};
use fhirforge_core::eval::{prediff, AnnotationSet};
use fhirforge_core::fhir::{parse_bundle, serialize_bundle_pretty};
use fhirforge_core::pipeline::{
    self, RunConfig, RunManifest, BUNDLE_FILE, BUNDLE_PRETTY_FILE, MANIFEST_FILE, TRACE_FILE,
};

use crate::args::TranslateArgs;
use crate::render::{exit_for, step_summary};
use crate::EXIT_OK;

pub const PROVISIONAL_FILE: &str = "annotations.provisional.jsonl";
const POLL: Duration = Duration::from_millis(100);

fn read_letter(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if text.trim().is_empty() {
        bail!("{} is empty", path.display());
    }
    Ok(text)
}

fn document_id(args: &TranslateArgs, path: &Path) -> String {
    args.document_id
        .clone()
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

pub async fn run(args: TranslateArgs) -> Result<u8> {
    if let Some(server) = &args.server {
        return remote(&args, server).await;
    }
    let config = args.run.build()?;
    if let Some(dir) = &args.corpus {
        return corpus(&args, &config, dir).await;
    }
    let path = args.document.as_deref().expect("clap requires a document without --corpus");
    let text = read_letter(path)?;
    let run_id = pipeline::new_run_id();
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    let (code, _) = local(&config, &run_id, &document_id(&args, path), &text, &out, args.quiet).await?;
    Ok(code)
}

fn report(manifest: &RunManifest) {
    println!("status: {} after {} step(s), {} ms", manifest.status, manifest.steps, manifest.duration_ms);
    if let Some(b) = &manifest.bundle_path {
        println!("bundle: {}", b.display());
    }
    println!("trace: {}", manifest.trace_path.display());
    if let Some(e) = &manifest.error {
        eprintln!("run error: {e}");
    }
}

async fn local(
    config: &RunConfig,
    run_id: &str,
    document_id: &str,
    text: &str,
    out: &Path,
    quiet: bool,
) -> Result<(u8, Option<String>)> {
    let (agent, mut provider) = pipeline::prepare(config)?;
    let mut observer = |step: &AgentStep| {
        if !quiet {
            println!("{}", step_summary(step));
        }
    };
    let started = Instant::now();
    let outcome = agent.run_observed(text, provider.as_mut(), &mut observer).await;
    let manifest = pipeline::write_artifacts(out, run_id, document_id, text, config, &outcome, started.elapsed())?;
    report(&manifest);
    Ok((exit_for(outcome.status), outcome.bundle_json))
}

/// Each document goes to `<out>/<id>/`; documents with a baseline also get
/// a provisional annotation file. Exits with the highest code seen.
async fn corpus(args: &TranslateArgs, config: &RunConfig, dir: &Path) -> Result<u8> {
    let docs = load_corpus(dir)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(pipeline::new_run_id()));
    let mut worst = EXIT_OK;
    for doc in &docs {
        println!("== {}", doc.id);
        let mut doc_config = config.clone();
        doc_config.agent.language = Some(doc.language.clone());
        let doc_out = out.join(&doc.id);
        let (code, bundle) =
            local(&doc_config, &pipeline::new_run_id(), &doc.id, &doc.text, &doc_out, args.quiet).await?;
        worst = worst.max(code);
        if let (Some(json), CorpusDocument { baseline: Some(hb), .. }) = (bundle, doc) {
            let pd = parse_bundle(&json)?.value;
            let set = AnnotationSet::new(prediff(&pd, hb));
            let path = doc_out.join(PROVISIONAL_FILE);
            std::fs::write(&path, set.to_jsonl()).with_context(|| format!("{}", path.display()))?;
            println!("provisional annotations: {}", path.display());
        }
    }
    Ok(worst)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

async fn remote(args: &TranslateArgs, server: &str) -> Result<u8> {
    let Some(path) = args.document.as_deref() else {
        bail!("--server translates a single document; --corpus runs locally only");
    };
    let text = read_letter(path)?;
    // A local config file travels whole; otherwise only the given flags do.
    let overrides = match &args.run.config {
        Some(_) => args.run.build()?.snapshot(),
        None => args.run.overrides()?,
    };
    let client = Client::new(server);
    let req = TranslateRequest {
        text,
        document_id: Some(document_id(args, path)),
        config: overrides.as_object().is_some_and(|o| !o.is_empty()).then_some(overrides),
    };
    let run_id = client.translate(&req).await?.run_id;
    println!("run {run_id} accepted by {server}");

    let started = Instant::now();
    let mut printed = 0;
    let view = loop {
        let view = client.run(&run_id).await?;
        if view.steps > printed {
            let partial = client.trace(&run_id).await?;
            for step in partial.lines().filter_map(|l| serde_json::from_str::<AgentStep>(l).ok()).skip(printed) {
                if !args.quiet {
                    println!("{}", step_summary(&step));
                }
                printed += 1;
            }
        }
        if view.state == RunState::Done {
            break view;
        }
        if started.elapsed() > Duration::from_secs(args.wait_secs) {
            bail!("run {run_id} did not finish within {} s", args.wait_secs);
        }
        tokio::time::sleep(POLL).await;
    };

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    std::fs::create_dir_all(&out).with_context(|| format!("{}", out.display()))?;
    let trace_path = out.join(TRACE_FILE);
    write(&trace_path, &client.trace(&run_id).await?)?;
    let bundle_path = match view.bundle_json() {
        Some(json) => {
            let path = out.join(BUNDLE_FILE);
            write(&path, json)?;
            write(&out.join(BUNDLE_PRETTY_FILE), &serialize_bundle_pretty(&parse_bundle(json)?.value)?)?;
            Some(path)
        }
        None => None,
    };
    let status = view.status.unwrap_or(AgentStatus::ProviderFailure);
    let manifest = match view.manifest {
        Some(m) => RunManifest { trace_path, bundle_path, ..m },
        None => bail!("run {run_id} finished without a manifest: {}", view.error.unwrap_or_default()),
    };
    write(&out.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    report(&manifest);
    Ok(exit_for(status))
}
