use std::time::Duration;

use reqwest::StatusCode;
use serde_json::Value;

use super::{ConceptMatch, TermQuery, TerminologyError, DEFAULT_TIMEOUT};

const SNIPPET_LEN: usize = 200;

/// Client for `GET {base}/ValueSet/$expand?url=&filter=&count=`.
#[derive(Debug, Clone)]
pub struct RemoteTerminology {
    base_url: String,
    timeout: Duration,
    client: reqwest::Client,
}

impl RemoteTerminology {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let base_url = base_url.into().trim_end_matches('/').to_owned();
        Self { base_url, timeout, client: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub async fn expand(&self, query: &TermQuery) -> Result<Vec<ConceptMatch>, TerminologyError> {
        let url = format!("{}/ValueSet/$expand", self.base_url);
        let count = query.limit.to_string();
        let request = self
            .client
            .get(&url)
            .header(reqwest::header::ACCEPT, "application/fhir+json, application/json")
            .query(&[("url", query.valueset.url.as_str()), ("filter", query.text.as_str()), ("count", count.as_str())])
            .timeout(self.timeout);

        let response = request.send().await.map_err(|e| self.transport_error(e))?;
        let status = response.status();
        let body = response.text().await.map_err(|e| self.transport_error(e))?;
        if status == StatusCode::NOT_FOUND {
            return Err(TerminologyError::NotFound { url: query.valueset.url.clone() });
        }
        if !status.is_success() {
            return Err(TerminologyError::Status { status: status.as_u16(), snippet: snippet(&body) });
        }
        let json: Value = serde_json::from_str(&body)
            .map_err(|e| TerminologyError::InvalidResponse(format!("{e}: {}", snippet(&body))))?;
        parse_expansion(&json, query.limit)
    }

    fn transport_error(&self, e: reqwest::Error) -> TerminologyError {
        if e.is_timeout() {
            TerminologyError::Timeout(self.timeout)
        } else {
            TerminologyError::Transport(e.to_string())
        }
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(SNIPPET_LEN).collect()
}

/// Maps `expansion.contains[]` (flattened depth-first) to matches scored
/// `1 - rank/limit`, keeping server order.
pub fn parse_expansion(json: &Value, limit: usize) -> Result<Vec<ConceptMatch>, TerminologyError> {
    if json.get("resourceType").and_then(Value::as_str) == Some("OperationOutcome") {
        return Err(TerminologyError::InvalidResponse(
            json.pointer("/issue/0/diagnostics").and_then(Value::as_str).unwrap_or("OperationOutcome").to_owned(),
        ));
    }
    let expansion =
        json.get("expansion").ok_or_else(|| TerminologyError::InvalidResponse("response has no expansion".into()))?;
    let mut flat = Vec::new();
    if let Some(contains) = expansion.get("contains").and_then(Value::as_array) {
        flatten(contains, &mut flat);
    }
    Ok(flat
        .into_iter()
        .take(limit)
        .enumerate()
        .map(|(rank, (system, code, display))| ConceptMatch {
            system,
            code,
            display,
            score: 1.0 - rank as f64 / limit as f64,
        })
        .collect())
}

fn flatten(contains: &[Value], out: &mut Vec<(String, String, String)>) {
    for c in contains {
        let field = |k: &str| c.get(k).and_then(Value::as_str).map(str::to_owned);
        if let (Some(code), false) = (field("code"), c.get("abstract").and_then(Value::as_bool).unwrap_or(false)) {
            let display = field("display").unwrap_or_else(|| code.clone());
            out.push((field("system").unwrap_or_default(), code, display));
        }
        if let Some(nested) = c.get("contains").and_then(Value::as_array) {
            flatten(nested, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn scores_follow_server_rank() {
        let body = json!({"resourceType":"ValueSet","expansion":{"contains":[
            {"system":"http://snomed.info/sct","code":"a","display":"A"},
            {"system":"http://snomed.info/sct","code":"b","display":"B",
             "contains":[{"system":"http://snomed.info/sct","code":"c","display":"C"}]}
        ]}});
        let m = parse_expansion(&body, 4).unwrap();
        let got: Vec<_> = m.iter().map(|m| (m.code.as_str(), m.score)).collect();
        assert_eq!(got, [("a", 1.0), ("b", 0.75), ("c", 0.5)]);
        assert_eq!(parse_expansion(&body, 2).unwrap().len(), 2);
    }

    #[test]
    fn empty_expansion() {
        let m = parse_expansion(&json!({"resourceType":"ValueSet","expansion":{"total":0}}), 10).unwrap();
        assert!(m.is_empty());
        assert!(parse_expansion(&json!({"resourceType":"ValueSet"}), 10).is_err());
    }
}
