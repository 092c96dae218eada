use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde_json::{json, Value};

use super::{ChatMessage, ExchangeRecord, HttpProviderConfig, ModelParams, Provider, ProviderError, Redactor};

const SNIPPET_LEN: usize = 300;

/// OpenAI-style `POST {base}/v1/chat/completions`.
pub struct HttpProvider {
    config: HttpProviderConfig,
    api_key: String,
    client: reqwest::Client,
    redactor: Redactor,
    exchanges: Vec<ExchangeRecord>,
}

impl HttpProvider {
    pub fn from_env(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| ProviderError::MissingKey { env: config.api_key_env.clone() })?;
        Ok(Self::new(config, key))
    }

    pub fn new(config: HttpProviderConfig, api_key: String) -> Self {
        Self {
            redactor: Redactor::new([api_key.clone()]),
            api_key,
            client: reqwest::Client::new(),
            exchanges: Vec::new(),
            config,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn body(&self, messages: &[ChatMessage], params: &ModelParams) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        for (k, v) in &params.extra {
            body[k] = v.clone();
        }
        body
    }

    fn record(&mut self, attempt: u32, body: &Value, status: Option<u16>, response: Value) {
        let request = json!({
            "url": self.endpoint(),
            "headers": {"authorization": format!("Bearer {}", self.api_key)},
            "body": body,
        });
        self.exchanges.push(ExchangeRecord {
            attempt,
            request: self.redactor.redact(&request),
            status,
            response: self.redactor.redact(&response),
            timestamp: chrono::Utc::now(),
        });
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Exponential backoff: `base * 2^attempt`, jittered by up to ±20%.
pub fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let nominal = base.as_secs_f64() * 2f64.powi(attempt as i32);
    let jitter = rand::rng().random_range(-0.2..=0.2);
    Duration::from_secs_f64(nominal * (1.0 + jitter))
}

fn snippet(s: &str) -> String {
    s.chars().take(SNIPPET_LEN).collect()
}

#[async_trait]
impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    async fn complete(&mut self, messages: &[ChatMessage], params: &ModelParams) -> Result<String, ProviderError> {
        let body = self.body(messages, params);
        let attempts = self.config.retries + 1;
        let base = Duration::from_millis(self.config.backoff_base_ms);
        for attempt in 0..attempts {
            if attempt > 0 {
                tokio::time::sleep(backoff_delay(base, attempt - 1)).await;
            }
            let sent = self
                .client
                .post(self.endpoint())
                .bearer_auth(&self.api_key)
                .timeout(self.config.timeout())
                .json(&body)
                .send()
                .await;
            let response = match sent {
                Ok(r) => r,
                Err(e) if e.is_timeout() => {
                    self.record(attempt + 1, &body, None, json!({"error": "timeout"}));
                    return Err(ProviderError::Deadline(self.config.timeout()));
                }
                Err(e) => {
                    let message = self.redactor.redact_text(&e.to_string());
                    self.record(attempt + 1, &body, None, json!({"error": message}));
                    if attempt + 1 < attempts {
                        tracing::warn!(attempt, %message, "provider transport error, retrying");
                        continue;
                    }
                    return Err(ProviderError::Transport { attempts: attempt + 1, message });
                }
            };
            let status = response.status().as_u16();
            let text = match response.text().await {
                Ok(t) => t,
                Err(e) if e.is_timeout() => return Err(ProviderError::Deadline(self.config.timeout())),
                Err(e) => return Err(ProviderError::InvalidResponse(e.to_string())),
            };
            let parsed: Value = serde_json::from_str(&text).unwrap_or_else(|_| Value::String(snippet(&text)));
            self.record(attempt + 1, &body, Some(status), parsed.clone());
            if (200..300).contains(&status) {
                return parsed
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| ProviderError::InvalidResponse("missing choices[0].message.content".into()));
            }
            if retryable(status) && attempt + 1 < attempts {
                tracing::warn!(attempt, status, "provider returned retryable status");
                continue;
            }
            return Err(ProviderError::Status {
                status,
                attempts: attempt + 1,
                snippet: self.redactor.redact_text(&snippet(&text)),
            });
        }
        unreachable!("the final attempt always returns")
    }

    fn take_exchanges(&mut self) -> Vec<ExchangeRecord> {
        std::mem::take(&mut self.exchanges)
    }
}
