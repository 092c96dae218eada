//! Clinical letters on disk, optionally paired with baseline Bundles.
//!
//! A corpus directory holds `<id>.txt` letters and optional
//! `<id>.baseline.json` siblings. An optional `corpus.toml` replaces the
//! directory scan:
//!
//! ```toml
//! language = "de"            # default for all documents
//!
//! [documents.letter-a]
//! text = "a.txt"
//! baseline = "a.hb.json"     # optional
//! language = "en"            # optional override
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::fhir::{parse_bundle, validate_bundle, Bundle};

pub const MANIFEST: &str = "corpus.toml";
pub const DEFAULT_LANGUAGE: &str = "de";
const BASELINE_SUFFIX: &str = ".baseline.json";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDocument {
    pub id: String,
    pub text: String,
    pub language: String,
    pub baseline_path: Option<PathBuf>,
    pub baseline: Option<Bundle>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {message}", file.display())]
pub struct CorpusError {
    pub file: PathBuf,
    pub message: String,
}

fn err(file: &Path, message: impl Into<String>) -> CorpusError {
    CorpusError { file: file.to_owned(), message: message.into() }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    language: Option<String>,
    #[serde(default)]
    documents: BTreeMap<String, ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    text: PathBuf,
    baseline: Option<PathBuf>,
    language: Option<String>,
}

/// Parses and validates a baseline Bundle; errors name the first issue.
pub fn load_baseline(path: &Path) -> Result<Bundle, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(path, e.to_string()))?;
    let parsed = parse_bundle(&text).map_err(|e| match e.issues().first() {
        Some(first) => err(path, first.to_string()),
        None => err(path, e.to_string()),
    })?;
    if let Some(first) = validate_bundle(&parsed.value).into_iter().find(|i| i.is_error()) {
        return Err(err(path, first.to_string()));
    }
    Ok(parsed.value)
}

fn document(
    id: String,
    text_path: &Path,
    language: String,
    baseline: Option<PathBuf>,
) -> Result<CorpusDocument, CorpusError> {
    let text = std::fs::read_to_string(text_path).map_err(|e| err(text_path, e.to_string()))?;
    if text.trim().is_empty() {
        return Err(err(text_path, "letter is empty"));
    }
    let bundle = baseline.as_deref().map(load_baseline).transpose()?;
    Ok(CorpusDocument { id, text, language, baseline_path: baseline, baseline: bundle })
}

/// Loads every document, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusDocument>, CorpusError> {
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let raw = std::fs::read_to_string(&manifest_path).map_err(|e| err(&manifest_path, e.to_string()))?;
        let manifest: Manifest = toml::from_str(&raw).map_err(|e| err(&manifest_path, e.to_string()))?;
        let default_lang = manifest.language.unwrap_or_else(|| DEFAULT_LANGUAGE.to_owned());
        // BTreeMap iteration is already id order.
        return manifest
            .documents
            .into_iter()
            .map(|(id, e)| {
                let lang = e.language.unwrap_or_else(|| default_lang.clone());
                document(id, &dir.join(&e.text), lang, e.baseline.map(|b| dir.join(b)))
            })
            .collect();
    }

    let entries = std::fs::read_dir(dir).map_err(|e| err(dir, e.to_string()))?;
    let mut docs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| err(dir, e.to_string()))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        let baseline = dir.join(format!("{id}{BASELINE_SUFFIX}"));
        let baseline = baseline.exists().then_some(baseline);
        docs.push(document(id, &path, DEFAULT_LANGUAGE.to_owned(), baseline)?);
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(docs)
}
