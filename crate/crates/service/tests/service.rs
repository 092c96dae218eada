use std::path::{Path, PathBuf};
use std::time::Duration;

use fhirforge_client::{Client, ClientError};
use fhirforge_core::agent::{AgentStatus, SessionTrace};
use fhirforge_core::api::{RunState, SearchParams, TranslateRequest};
use fhirforge_core::fhir::{sha256_hex, IssueKind};
use fhirforge_core::llm::{HttpProviderConfig, ProviderConfig};
use fhirforge_core::pipeline::{RunConfig, BUNDLE_FILE, MANIFEST_FILE, TRACE_FILE};
use fhirforge_service::{serve, ServiceConfig};
use serde_json::json;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn script(name: &str) -> PathBuf {
    fixtures().join("scripts").join(format!("{name}.json"))
}

fn letter() -> String {
    std::fs::read_to_string(fixtures().join("letter.txt")).unwrap()
}

async fn start(config: ServiceConfig) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, config));
    Client::new(format!("http://{addr}"))
}

fn scripted(name: &str, runs: &Path) -> ServiceConfig {
    ServiceConfig::new(RunConfig::new(ProviderConfig::Scripted { script: script(name) }), runs)
}

fn request(text: String) -> TranslateRequest {
    TranslateRequest { text, document_id: Some("letter".into()), config: None }
}

async fn finish(client: &Client, run_id: &str) -> fhirforge_core::api::RunView {
    client.wait(run_id, Duration::from_millis(20), Duration::from_secs(20)).await.unwrap()
}

#[tokio::test]
async fn translate_then_poll_returns_bundle_and_artifacts() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("success_basic", runs.path())).await;
    let accepted = client.translate(&request(letter())).await.unwrap();
    let view = finish(&client, &accepted.run_id).await;

    assert_eq!(view.state, RunState::Done);
    assert_eq!(view.status, Some(AgentStatus::Success));
    let expected = std::fs::read_to_string(fixtures().join("success_basic.bundle.json")).unwrap();
    assert_eq!(view.bundle_json(), Some(expected.trim_end()));
    assert_eq!(view.bundle_sha256.as_deref(), Some(sha256_hex(expected.trim_end()).as_str()));

    let dir = runs.path().join(&accepted.run_id);
    assert_eq!(std::fs::read_to_string(dir.join(BUNDLE_FILE)).unwrap(), expected.trim_end());
    assert!(dir.join(MANIFEST_FILE).exists());
    let manifest = view.manifest.unwrap();
    assert_eq!(manifest.document_id, "letter");
    assert_eq!(manifest.run_id, accepted.run_id);

    let served = client.trace(&accepted.run_id).await.unwrap();
    assert_eq!(served, std::fs::read_to_string(dir.join(TRACE_FILE)).unwrap());
    let trace = SessionTrace::parse(&served).unwrap();
    assert_eq!(trace.steps.len(), view.steps);
    assert_eq!(trace.header.document_sha256, sha256_hex(&letter()));
}

#[tokio::test]
async fn budget_exhaustion_still_leaves_manifest_and_trace() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("budget_exhaust", runs.path())).await;
    let id = client.translate(&request(letter())).await.unwrap().run_id;
    let view = finish(&client, &id).await;
    assert_eq!(view.status, Some(AgentStatus::BudgetExhausted));
    assert!(view.bundle.is_none());
    let dir = runs.path().join(&id);
    assert!(dir.join(MANIFEST_FILE).exists());
    assert!(dir.join(TRACE_FILE).exists());
    assert!(!dir.join(BUNDLE_FILE).exists());
}

#[tokio::test]
async fn overrides_patch_the_base_config() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("success_basic", runs.path())).await;
    let req = TranslateRequest {
        config: Some(
            json!({"provider": {"kind": "scripted", "script": script("budget_exhaust")}, "agent": {"max_steps": 3}}),
        ),
        ..request(letter())
    };
    let id = client.translate(&req).await.unwrap().run_id;
    let view = finish(&client, &id).await;
    assert_eq!(view.status, Some(AgentStatus::BudgetExhausted));
    assert_eq!(view.steps, 3);

    let bad = TranslateRequest { config: Some(json!({"agent": {"max_steps": 0}})), ..request(letter()) };
    match client.translate(&bad).await.unwrap_err() {
        ClientError::Api { status, kind, .. } => {
            assert_eq!(status.as_u16(), 400);
            assert_eq!(kind, "config");
        }
        e => panic!("{e}"),
    }
    let unknown = TranslateRequest { config: Some(json!({"agnet": {}})), ..request(letter()) };
    assert!(matches!(client.translate(&unknown).await, Err(ClientError::Api { .. })));
}

#[tokio::test]
async fn setup_errors_are_reported_before_a_run_starts() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("does_not_exist", runs.path())).await;
    match client.translate(&request(letter())).await.unwrap_err() {
        ClientError::Api { status, kind, .. } => {
            assert_eq!(status.as_u16(), 400);
            assert_eq!(kind, "provider");
        }
        e => panic!("{e}"),
    }
    match client.translate(&request("   ".into())).await.unwrap_err() {
        ClientError::Api { kind, .. } => assert_eq!(kind, "bad-request"),
        e => panic!("{e}"),
    }
    assert_eq!(std::fs::read_dir(runs.path()).unwrap().count(), 0);
}

#[tokio::test]
async fn unknown_run_and_endpoint_are_json_404() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("success_basic", runs.path())).await;
    match client.run("nope").await.unwrap_err() {
        ClientError::Api { status, kind, .. } => {
            assert_eq!(status.as_u16(), 404);
            assert_eq!(kind, "not-found");
        }
        e => panic!("{e}"),
    }
    assert!(matches!(client.trace("nope").await, Err(ClientError::Api { .. })));
}

#[tokio::test]
async fn search_endpoint() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("success_basic", runs.path())).await;
    let report = client.search(&SearchParams { text: "forehead".into(), ..Default::default() }).await.unwrap();
    assert!(report.matches.iter().any(|m| m.concept.code == "52795006"));
    assert_eq!(report.matches[0].concept.code, "52795006");
    assert_eq!(report.matches[0].valueset, "body-site");

    let mild = SearchParams {
        text: "mild".into(),
        valueset: Some("severity".into()),
        limit: Some(1),
        backend: Some("local".into()),
    };
    let report = client.search(&mild).await.unwrap();
    assert_eq!(report.matches.len(), 1);
    assert_eq!(report.matches[0].concept.code, "255604002");

    let unknown = SearchParams { text: "x".into(), valueset: Some("colour".into()), ..Default::default() };
    match client.search(&unknown).await.unwrap_err() {
        ClientError::Api { status, kind, message, .. } => {
            assert_eq!(status.as_u16(), 404);
            assert_eq!(kind, "unknown-valueset");
            assert!(message.contains("severity"), "{message}");
        }
        e => panic!("{e}"),
    }
    let empty = SearchParams { text: " ".into(), ..Default::default() };
    assert!(matches!(client.search(&empty).await, Err(ClientError::Api { kind, .. }) if kind == "invalid-query"));
    let backend = SearchParams { text: "mild".into(), backend: Some("carrier-pigeon".into()), ..Default::default() };
    assert!(matches!(client.search(&backend).await, Err(ClientError::Api { kind, .. }) if kind == "bad-request"));
}

#[tokio::test]
async fn validate_endpoint() {
    let runs = tempfile::tempdir().unwrap();
    let client = start(scripted("success_basic", runs.path())).await;
    let good = std::fs::read_to_string(fixtures().join("success_basic.bundle.json")).unwrap();
    let report = client.validate(&good).await.unwrap();
    assert!(report.valid, "{report:?}");

    let cured = good.replace("\"active\"", "\"cured\"");
    let report = client.validate(&cured).await.unwrap();
    assert!(!report.valid);
    assert!(report.issues.iter().any(|i| i.kind == IssueKind::BadBinding), "{report:?}");

    let report = client.validate("{\"resourceType\": ").await.unwrap();
    assert!(!report.valid);
    assert!(report.syntax_error.is_some());
}

#[tokio::test]
async fn concurrent_run_cap_answers_429() {
    // A server that accepts connections and never answers keeps the run busy.
    let silent = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let silent_addr = silent.local_addr().unwrap();
    tokio::spawn(async move {
        let mut held = Vec::new();
        while let Ok((s, _)) = silent.accept().await {
            held.push(s);
        }
    });
    std::env::set_var("FHIRFORGE_SERVICE_TEST_KEY", "sk-service-test");
    let http = HttpProviderConfig {
        api_key_env: "FHIRFORGE_SERVICE_TEST_KEY".into(),
        timeout_secs: 1,
        retries: 0,
        ..HttpProviderConfig::new(format!("http://{silent_addr}"), "m")
    };
    let runs = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new(RunConfig::new(ProviderConfig::Http(http)), runs.path());
    config.max_concurrent_runs = 1;
    config.retry_after_secs = 7;
    let client = start(config).await;

    let first = client.translate(&request(letter())).await.unwrap();
    match client.translate(&request(letter())).await.unwrap_err() {
        ClientError::Api { status, kind, retry_after, .. } => {
            assert_eq!(status.as_u16(), 429);
            assert_eq!(kind, "too-many-runs");
            assert_eq!(retry_after, Some(7));
        }
        e => panic!("{e}"),
    }
    let view = finish(&client, &first.run_id).await;
    assert_eq!(view.status, Some(AgentStatus::ProviderFailure));
    assert!(view.error.is_some());
    let exchanges = std::fs::read_to_string(runs.path().join(&first.run_id).join("exchanges.jsonl")).unwrap();
    assert!(!exchanges.contains("sk-service-test"));

    // The slot is released once the run is recorded.
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert!(client.translate(&request(letter())).await.is_ok());
}
