use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::issue::ValidationIssue;
use super::types::{Bundle, Resource};
use super::validate::{validate, validate_bundle};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("refusing to serialize invalid document: {first}")]
pub struct SerializeError {
    pub first: ValidationIssue,
}

fn refuse_if_invalid(issues: Vec<ValidationIssue>) -> Result<(), SerializeError> {
    match issues.into_iter().find(ValidationIssue::is_error) {
        Some(first) => Err(SerializeError { first }),
        None => Ok(()),
    }
}

fn compact<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("model types always serialize")
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("model types always serialize");
    s.push('\n');
    s
}

/// Canonical compact JSON: `resourceType`, `id`, then declared field order,
/// no insignificant whitespace.
pub fn serialize(resource: &Resource) -> Result<String, SerializeError> {
    refuse_if_invalid(validate(resource))?;
    Ok(compact(resource))
}

/// Two-space indented form with a trailing LF.
pub fn serialize_pretty(resource: &Resource) -> Result<String, SerializeError> {
    refuse_if_invalid(validate(resource))?;
    Ok(pretty(resource))
}

pub fn serialize_bundle(bundle: &Bundle) -> Result<String, SerializeError> {
    refuse_if_invalid(validate_bundle(bundle))?;
    Ok(compact(bundle))
}

pub fn serialize_bundle_pretty(bundle: &Bundle) -> Result<String, SerializeError> {
    refuse_if_invalid(validate_bundle(bundle))?;
    Ok(pretty(bundle))
}

/// Compact form without validation, for recording partial or invalid state.
pub fn to_compact_unchecked<T: Serialize>(value: &T) -> String {
    compact(value)
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
