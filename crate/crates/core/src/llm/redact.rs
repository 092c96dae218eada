use serde_json::{Map, Value};

use crate::fhir::sha256_hex;

pub const REDACTED: &str = "***";

const SECRET_KEYS: &[&str] =
    &["api_key", "apikey", "api-key", "x-api-key", "authorization", "access_token", "token", "password", "secret"];

/// Scrubs secrets from records before they are persisted, and in privacy
/// mode replaces the clinical document with its SHA-256.
#[derive(Debug, Clone, Default)]
pub struct Redactor {
    secrets: Vec<String>,
    document: Option<(String, String)>,
}

impl Redactor {
    pub fn new(secrets: impl IntoIterator<Item = String>) -> Self {
        let secrets = secrets.into_iter().filter(|s| !s.is_empty()).collect();
        Self { secrets, document: None }
    }

    /// Enables privacy mode for `document`.
    pub fn with_document_privacy(mut self, document: &str) -> Self {
        if !document.is_empty() {
            self.document = Some((document.to_owned(), sha256_hex(document)));
        }
        self
    }

    pub fn redact_text(&self, text: &str) -> String {
        let mut out = text.to_owned();
        if let Some((doc, hash)) = &self.document {
            if out.contains(doc.as_str()) {
                out = out.replace(doc.as_str(), hash);
            }
        }
        for s in &self.secrets {
            if out.contains(s.as_str()) {
                out = out.replace(s.as_str(), REDACTED);
            }
        }
        out
    }

    pub fn redact(&self, value: &Value) -> Value {
        match value {
            Value::String(s) => Value::String(self.redact_text(s)),
            Value::Array(items) => Value::Array(items.iter().map(|v| self.redact(v)).collect()),
            Value::Object(map) => {
                let mut out = Map::with_capacity(map.len());
                for (k, v) in map {
                    let lower = k.to_ascii_lowercase();
                    let replaced = if SECRET_KEYS.contains(&lower.as_str()) {
                        redact_secret_value(v)
                    } else if lower == "document" && self.document.is_some() {
                        match v {
                            Value::String(s) => Value::String(sha256_hex(s)),
                            other => self.redact(other),
                        }
                    } else {
                        self.redact(v)
                    };
                    out.insert(k.clone(), replaced);
                }
                Value::Object(out)
            }
            other => other.clone(),
        }
    }
}

fn redact_secret_value(v: &Value) -> Value {
    match v {
        // Keep the auth scheme so logs stay readable.
        Value::String(s) => match s.split_once(' ') {
            Some((scheme, _)) if scheme.eq_ignore_ascii_case("bearer") => Value::String(format!("{scheme} {REDACTED}")),
            _ => Value::String(REDACTED.to_owned()),
        },
        Value::Null => Value::Null,
        _ => Value::String(REDACTED.to_owned()),
    }
}
