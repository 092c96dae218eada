//! FHIR R4 subset: Patient, Condition, MedicationStatement and collection
//! Bundles, with parsing, required-binding validation and canonical JSON.

mod bundle;
mod issue;
mod parse;
mod serialize;
mod types;
mod validate;

#[cfg(feature = "strategies")]
pub mod strategies;

pub use bundle::make_bundle;
pub use issue::{has_errors, render_issues, IssueKind, Severity, ValidationIssue};
pub use parse::{
    bundle_from_value, document_from_value, parse_bundle, parse_document, parse_json, parse_resource,
    resource_from_value, ParseError, Parsed,
};
pub use serialize::{
    serialize, serialize_bundle, serialize_bundle_pretty, serialize_pretty, sha256_hex, to_compact_unchecked,
    SerializeError,
};
pub use types::*;
pub use validate::{
    is_valid_date, is_valid_date_time, is_valid_id, reference_issues, validate, validate_bundle, CLINICAL_STATUS_CODES,
    CONDITION_CLINICAL_SYSTEM, CONDITION_VERIFICATION_SYSTEM, GENDER_CODES, MEDICATION_STATUS_CODES, NAME_USE_CODES,
    PERIOD_UNIT_CODES, VERIFICATION_STATUS_CODES,
};

/// Validates whatever document was parsed.
pub fn validate_document(doc: &Document) -> Vec<ValidationIssue> {
    match doc {
        Document::Resource(r) => validate(r),
        Document::Bundle(b) => validate_bundle(b),
    }
}
