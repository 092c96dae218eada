//! Code Search: ValueSet-constrained concept lookup against a FHIR
//! terminology server, with a local lexical index for offline runs.

mod index;
mod remote;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{dice, normalize, rank, score, tokens, trigrams, Concept, ConceptIndex};
pub use remote::RemoteTerminology;

pub const DEFAULT_LIMIT: usize = 10;
pub const MAX_LIMIT: usize = 50;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSetRef {
    pub url: String,
    pub name: String,
    /// One-line usage hint shown in the agent prompt.
    pub description: String,
}

impl ValueSetRef {
    pub fn new(url: impl Into<String>, name: impl Into<String>, description: impl Into<String>) -> Self {
        Self { url: url.into(), name: name.into(), description: description.into() }
    }
}

struct BuiltinSnapshot {
    url: &'static str,
    name: &'static str,
    description: &'static str,
    tsv: &'static str,
}

const BUILTIN: &[BuiltinSnapshot] = &[
    BuiltinSnapshot {
        url: "http://hl7.org/fhir/ValueSet/condition-code",
        name: "condition",
        description: "Condition.code: clinical findings and disorders (SNOMED CT)",
        tsv: include_str!("../../data/valuesets/condition.tsv"),
    },
    BuiltinSnapshot {
        url: "http://hl7.org/fhir/ValueSet/body-site",
        name: "body-site",
        description: "Condition.bodySite: anatomical body structures (SNOMED CT)",
        tsv: include_str!("../../data/valuesets/body-site.tsv"),
    },
    BuiltinSnapshot {
        url: "http://hl7.org/fhir/ValueSet/condition-severity",
        name: "severity",
        description: "Condition.severity: mild, moderate or severe (SNOMED CT)",
        tsv: include_str!("../../data/valuesets/severity.tsv"),
    },
    BuiltinSnapshot {
        url: "http://hl7.org/fhir/ValueSet/medication-codes",
        name: "medication",
        description: "MedicationStatement.medicationCodeableConcept: drugs and substances (SNOMED CT)",
        tsv: include_str!("../../data/valuesets/medication.tsv"),
    },
    BuiltinSnapshot {
        url: "http://hl7.org/fhir/ValueSet/route-codes",
        name: "route",
        description: "Dosage route of administration (SNOMED CT)",
        tsv: include_str!("../../data/valuesets/route.tsv"),
    },
];

/// The ValueSets shipped with the engine.
pub fn default_valuesets() -> Vec<ValueSetRef> {
    BUILTIN.iter().map(|b| ValueSetRef::new(b.url, b.name, b.description)).collect()
}

/// Looks a ValueSet up by short name or canonical URL.
pub fn find_valueset<'a>(valuesets: &'a [ValueSetRef], key: &str) -> Option<&'a ValueSetRef> {
    valuesets.iter().find(|v| v.name == key || v.url == key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermQuery {
    pub text: String,
    pub valueset: ValueSetRef,
    pub limit: usize,
}

impl TermQuery {
    pub fn new(text: impl Into<String>, valueset: ValueSetRef, limit: usize) -> Result<Self, TerminologyError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TerminologyError::InvalidQuery("search text is empty".into()));
        }
        if limit == 0 || limit > MAX_LIMIT {
            return Err(TerminologyError::InvalidQuery(format!("limit must be in 1..={MAX_LIMIT}, got {limit}")));
        }
        Ok(Self { text: text.trim().to_owned(), valueset, limit })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub system: String,
    pub code: String,
    pub display: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TerminologyError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("value set not found: {url}")]
    NotFound { url: String },
    #[error("terminology server returned {status}: {snippet}")]
    Status { status: u16, snippet: String },
    #[error("terminology request failed: {0}")]
    Transport(String),
    #[error("terminology request timed out after {0:?}")]
    Timeout(Duration),
    #[error("unexpected terminology response: {0}")]
    InvalidResponse(String),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error("no local snapshot for value set {url}")]
    NoSnapshot { url: String },
    #[error("terminology unavailable: {0}")]
    Unavailable(String),
}

/// Local indexes keyed by ValueSet URL. Read-only after construction.
#[derive(Debug, Clone, Default)]
pub struct LocalTerminology {
    indexes: HashMap<String, ConceptIndex>,
}

impl LocalTerminology {
    pub fn builtin() -> Self {
        let indexes = BUILTIN
            .iter()
            .map(|b| {
                let idx = ConceptIndex::from_tsv(b.tsv).expect("builtin snapshots are well-formed");
                (b.url.to_owned(), idx)
            })
            .collect();
        Self { indexes }
    }

    pub fn insert(&mut self, url: impl Into<String>, index: ConceptIndex) {
        self.indexes.insert(url.into(), index);
    }

    /// Loads `<name>.tsv` for each ValueSet from `dir`; missing files are skipped.
    pub fn load_dir(dir: &Path, valuesets: &[ValueSetRef]) -> Result<Self, TerminologyError> {
        let mut out = Self::default();
        for vs in valuesets {
            let path = dir.join(format!("{}.tsv", vs.name));
            if path.exists() {
                out.insert(vs.url.clone(), ConceptIndex::load(&path)?);
            }
        }
        Ok(out)
    }

    pub fn index(&self, url: &str) -> Option<&ConceptIndex> {
        self.indexes.get(url)
    }

    pub fn search(&self, query: &TermQuery) -> Result<LocalHits, TerminologyError> {
        let index = self
            .indexes
            .get(&query.valueset.url)
            .ok_or_else(|| TerminologyError::NoSnapshot { url: query.valueset.url.clone() })?;
        let warning = index.is_empty().then(|| format!("local index for {} is empty", query.valueset.name));
        Ok(LocalHits { matches: index.search(query), warning })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalHits {
    pub matches: Vec<ConceptMatch>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    #[default]
    Local,
    Remote,
    RemoteWithFallback,
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(SearchMode::Local),
            "remote" => Ok(SearchMode::Remote),
            "remote-with-fallback" | "fallback" => Ok(SearchMode::RemoteWithFallback),
            other => Err(format!("unknown backend `{other}` (local, remote, remote-with-fallback)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Local,
    Remote,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Local => "local",
            Backend::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub matches: Vec<ConceptMatch>,
    pub backend: Backend,
    pub warnings: Vec<String>,
}

/// Dispatches queries to the configured backend(s).
#[derive(Debug, Clone)]
pub struct Terminology {
    pub mode: SearchMode,
    pub local: Arc<LocalTerminology>,
    pub remote: Option<RemoteTerminology>,
}

impl Terminology {
    pub fn local(local: Arc<LocalTerminology>) -> Self {
        Self { mode: SearchMode::Local, local, remote: None }
    }

    pub async fn search(&self, query: &TermQuery) -> Result<SearchOutcome, TerminologyError> {
        let from_local = |warnings: Vec<String>| -> Result<SearchOutcome, TerminologyError> {
            let hits = self.local.search(query)?;
            let mut warnings = warnings;
            warnings.extend(hits.warning);
            Ok(SearchOutcome { matches: hits.matches, backend: Backend::Local, warnings })
        };
        match self.mode {
            SearchMode::Local => {
                from_local(Vec::new()).map_err(|e| TerminologyError::Unavailable(format!("local: {e}")))
            }
            SearchMode::Remote | SearchMode::RemoteWithFallback => {
                let remote_result = match &self.remote {
                    Some(r) => r.expand(query).await,
                    None => Err(TerminologyError::Transport("no terminology server configured".into())),
                };
                match remote_result {
                    Ok(matches) => Ok(SearchOutcome { matches, backend: Backend::Remote, warnings: Vec::new() }),
                    Err(remote_err) if self.mode == SearchMode::RemoteWithFallback => {
                        tracing::warn!(error = %remote_err, "remote terminology failed, using local index");
                        from_local(vec![format!("remote failed: {remote_err}")]).map_err(|local_err| {
                            TerminologyError::Unavailable(format!("remote: {remote_err}; local: {local_err}"))
                        })
                    }
                    Err(remote_err) => Err(TerminologyError::Unavailable(format!("remote: {remote_err}"))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_snapshots_load() {
        let local = LocalTerminology::builtin();
        for vs in default_valuesets() {
            assert!(!local.index(&vs.url).unwrap().is_empty(), "{}", vs.name);
        }
    }

    #[test]
    fn query_invariants() {
        let vs = default_valuesets().remove(0);
        assert!(TermQuery::new("  ", vs.clone(), 10).is_err());
        assert!(TermQuery::new("mild", vs.clone(), 0).is_err());
        assert!(TermQuery::new("mild", vs.clone(), 51).is_err());
        assert_eq!(TermQuery::new(" mild ", vs, 50).unwrap().text, "mild");
    }

    #[test]
    fn builtin_severity_mild() {
        let local = LocalTerminology::builtin();
        let vs = find_valueset(&default_valuesets(), "severity").unwrap().clone();
        let hits = local.search(&TermQuery::new("mild", vs, 10).unwrap()).unwrap();
        assert_eq!(hits.matches[0].code, "255604002");
        assert_eq!(hits.matches[0].score, 1.0);
    }

    #[test]
    fn empty_index_warns() {
        let mut local = LocalTerminology::default();
        local.insert("urn:empty", ConceptIndex::default());
        let q = TermQuery::new("x", ValueSetRef::new("urn:empty", "empty", ""), 10).unwrap();
        let hits = local.search(&q).unwrap();
        assert!(hits.matches.is_empty());
        assert!(hits.warning.is_some());
    }

    #[tokio::test]
    async fn remote_mode_without_server_is_unavailable() {
        let t = Terminology { mode: SearchMode::Remote, local: Arc::new(LocalTerminology::builtin()), remote: None };
        let q = TermQuery::new("mild", find_valueset(&default_valuesets(), "severity").unwrap().clone(), 10).unwrap();
        let err = t.search(&q).await.unwrap_err();
        assert!(err.to_string().starts_with("terminology unavailable"));
    }
}
