use anyhow::{Context, Result};

use fhirforge_client::Client;
use fhirforge_core::agent::AgentConfig;
use fhirforge_core::api::SearchParams;
use fhirforge_core::corpus::load_corpus;
use fhirforge_core::pipeline::{self, TerminologyConfig};
use fhirforge_core::terminology::SearchMode;
use fhirforge_service::ServiceConfig;

use crate::args::{CorpusArgs, SearchArgs, ServeArgs, ValidateArgs};
use crate::{EXIT_FAILURE, EXIT_OK};

pub async fn validate(args: ValidateArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.file).with_context(|| format!("cannot read {}", args.file.display()))?;
    let report = match &args.server {
        Some(server) => Client::new(server).validate(&text).await?,
        None => pipeline::validate_text(&text),
    };
    if let Some(e) = &report.syntax_error {
        println!("syntax error at byte {}: {}", e.offset, e.message);
    }
    for issue in &report.issues {
        println!("{issue}");
    }
    if report.valid {
        println!("valid");
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_FAILURE)
    }
}

pub async fn search(args: SearchArgs) -> Result<u8> {
    let report = match &args.server {
        Some(server) => {
            let params = SearchParams {
                text: args.term.clone(),
                valueset: args.valueset.clone(),
                limit: Some(args.limit),
                backend: Some(args.backend.clone()),
            };
            Client::new(server).search(&params).await?
        }
        None => {
            let mode: SearchMode = args.backend.parse().map_err(anyhow::Error::msg)?;
            let terminology = TerminologyConfig {
                mode,
                server_url: args.terminology_url.clone(),
                snapshot_dir: args.snapshot_dir.clone(),
                ..TerminologyConfig::default()
            };
            pipeline::search(&terminology, &AgentConfig::default(), &args.term, args.valueset.as_deref(), args.limit)
                .await?
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.matches.is_empty() {
        eprintln!("no matches");
    }
    for m in &report.matches {
        println!("{}\t{}\t{:.3}", m.concept.code, m.concept.display, m.concept.score);
    }
    Ok(EXIT_OK)
}

pub fn corpus(args: CorpusArgs) -> Result<u8> {
    for doc in load_corpus(&args.dir)? {
        let baseline = doc.baseline_path.as_ref().map_or("-".to_owned(), |p| p.display().to_string());
        println!("{}\t{}\t{}\t{}", doc.id, doc.language, doc.text.chars().count(), baseline);
    }
    Ok(EXIT_OK)
}

pub async fn serve(args: ServeArgs) -> Result<u8> {
    let base = args.run.build()?;
    // Fail on bad terminology or agent settings now rather than per request.
    base.agent()?;
    let config = ServiceConfig {
        max_concurrent_runs: args.max_concurrent_runs.max(1),
        retry_after_secs: args.retry_after_secs,
        ..ServiceConfig::new(base, &args.runs_dir)
    };
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
        .await
        .with_context(|| format!("cannot bind {}:{}", args.host, args.port))?;
    println!("listening on http://{}", listener.local_addr()?);
    fhirforge_service::serve(listener, config).await?;
    Ok(EXIT_OK)
}
