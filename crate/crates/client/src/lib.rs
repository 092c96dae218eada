//! Async client for the fhirforge HTTP service.

use std::time::Duration;

use fhirforge_core::api::{ApiError, RunState, RunView, SearchParams, TranslateAccepted, TranslateRequest};
use fhirforge_core::pipeline::{SearchReport, ValidationReport};
use reqwest::{Response, StatusCode};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server answered {status} ({kind}): {message}")]
    Api {
        status: StatusCode,
        kind: String,
        message: String,
        /// Seconds, from `Retry-After`.
        retry_after: Option<u64>,
    },
    #[error("run {run_id} still running after {waited:?}")]
    Timeout { run_id: String, waited: Duration },
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base: base_url.into().trim_end_matches('/').to_owned(), http: reqwest::Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let retry_after =
            resp.headers().get(reqwest::header::RETRY_AFTER).and_then(|v| v.to_str().ok()).and_then(|v| v.parse().ok());
        let text = resp.text().await.unwrap_or_default();
        let (kind, message) = match serde_json::from_str::<ApiError>(&text) {
            Ok(e) => (e.kind, e.message),
            Err(_) => ("unknown".to_owned(), text),
        };
        Err(ClientError::Api { status, kind, message, retry_after })
    }

    pub async fn translate(&self, req: &TranslateRequest) -> Result<TranslateAccepted, ClientError> {
        let resp = self.http.post(self.url("/v1/translate")).json(req).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn run(&self, run_id: &str) -> Result<RunView, ClientError> {
        let resp = self.http.get(self.url(&format!("/v1/runs/{run_id}"))).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    /// Polls until the run is done or `timeout` elapses.
    pub async fn wait(&self, run_id: &str, poll: Duration, timeout: Duration) -> Result<RunView, ClientError> {
        let started = tokio::time::Instant::now();
        loop {
            let view = self.run(run_id).await?;
            if view.state == RunState::Done {
                return Ok(view);
            }
            if started.elapsed() >= timeout {
                return Err(ClientError::Timeout { run_id: run_id.to_owned(), waited: started.elapsed() });
            }
            tokio::time::sleep(poll).await;
        }
    }

    /// Trace JSONL as served.
    pub async fn trace(&self, run_id: &str) -> Result<String, ClientError> {
        let resp = self.http.get(self.url(&format!("/v1/runs/{run_id}/trace"))).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn validate(&self, json_text: &str) -> Result<ValidationReport, ClientError> {
        let resp = self
            .http
            .post(self.url("/v1/validate"))
            .header(reqwest::header::CONTENT_TYPE, "application/fhir+json")
            .body(json_text.to_owned())
            .send()
            .await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn search(&self, params: &SearchParams) -> Result<SearchReport, ClientError> {
        let resp = self.http.get(self.url("/v1/search")).query(params).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }
}
