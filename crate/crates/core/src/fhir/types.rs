//! Typed FHIR R4 subset. Field declaration order is the canonical JSON key
//! order, so do not reorder fields without regenerating the golden files.

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

/// Resource types the engine can construct.
pub const SUPPORTED_TYPES: [&str; 3] = ["Patient", "Condition", "MedicationStatement"];

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Coding {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

impl Coding {
    pub fn new(system: impl Into<String>, code: impl Into<String>, display: Option<&str>) -> Self {
        Self { system: Some(system.into()), code: Some(code.into()), display: display.map(str::to_owned) }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CodeableConcept {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub coding: Vec<Coding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl CodeableConcept {
    pub fn coded(coding: Coding) -> Self {
        Self { coding: vec![coding], text: None }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self { coding: Vec::new(), text: Some(text.into()) }
    }

    /// Display strings and free text, used for alignment and prompts.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.coding.iter().filter_map(|c| c.display.as_deref()).chain(self.text.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Reference {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

impl Reference {
    pub fn to(target: impl Into<String>) -> Self {
        Self { reference: Some(target.into()), display: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct HumanName {
    #[serde(rename = "use", skip_serializing_if = "Option::is_none")]
    pub name_use: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub given: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Address {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub line: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postal_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Quantity {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DoseAndRate {
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    pub dose_type: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dose_quantity: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TimingRepeat {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_unit: Option<String>,
}

/// Either a coded/free-text schedule (`code`) or a structured repeat.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Timing {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeat: Option<TimingRepeat>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Dosage {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dose_and_rate: Vec<DoseAndRate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Patient {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub name: Vec<HumanName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub birth_date: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub address: Vec<Address>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Condition {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<Reference>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clinical_status: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification_status: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub severity: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub body_site: Vec<CodeableConcept>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub category: Vec<CodeableConcept>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onset_date_time: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MedicationStatement {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<Reference>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// `medication[x]` restricted to the CodeableConcept choice.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medication_codeable_concept: Option<CodeableConcept>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dosage: Vec<Dosage>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "resourceType")]
pub enum Resource {
    Patient(Patient),
    Condition(Condition),
    MedicationStatement(MedicationStatement),
}

impl Resource {
    pub fn resource_type(&self) -> &'static str {
        match self {
            Resource::Patient(_) => "Patient",
            Resource::Condition(_) => "Condition",
            Resource::MedicationStatement(_) => "MedicationStatement",
        }
    }

    pub fn id(&self) -> Option<&str> {
        match self {
            Resource::Patient(r) => r.id.as_deref(),
            Resource::Condition(r) => r.id.as_deref(),
            Resource::MedicationStatement(r) => r.id.as_deref(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        let id = Some(id.into());
        match &mut self {
            Resource::Patient(r) => r.id = id,
            Resource::Condition(r) => r.id = id,
            Resource::MedicationStatement(r) => r.id = id,
        }
        self
    }

    /// `Type/id` key other resources use to point at this one.
    pub fn local_reference(&self) -> Option<String> {
        self.id().map(|id| format!("{}/{}", self.resource_type(), id))
    }

    /// Every Reference held by the resource, with its element path
    /// relative to the resource root (e.g. `subject`).
    pub fn references(&self) -> Vec<(&'static str, &Reference)> {
        match self {
            Resource::Patient(_) => Vec::new(),
            Resource::Condition(c) => c.subject.iter().map(|r| ("subject", r)).collect(),
            Resource::MedicationStatement(m) => m.subject.iter().map(|r| ("subject", r)).collect(),
        }
    }
}

impl From<Patient> for Resource {
    fn from(r: Patient) -> Self {
        Resource::Patient(r)
    }
}

impl From<Condition> for Resource {
    fn from(r: Condition) -> Self {
        Resource::Condition(r)
    }
}

impl From<MedicationStatement> for Resource {
    fn from(r: MedicationStatement) -> Self {
        Resource::MedicationStatement(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleEntry {
    pub resource: Resource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub bundle_type: Option<String>,
    pub entry: Vec<BundleEntry>,
}

impl Bundle {
    pub fn collection(resources: impl IntoIterator<Item = Resource>) -> Self {
        Self {
            bundle_type: Some("collection".to_owned()),
            entry: resources.into_iter().map(|resource| BundleEntry { resource }).collect(),
        }
    }

    pub fn resources(&self) -> impl Iterator<Item = &Resource> {
        self.entry.iter().map(|e| &e.resource)
    }

    pub fn len(&self) -> usize {
        self.entry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry.is_empty()
    }
}

impl Serialize for Bundle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("resourceType", "Bundle")?;
        if let Some(t) = &self.bundle_type {
            map.serialize_entry("type", t)?;
        }
        if !self.entry.is_empty() {
            map.serialize_entry("entry", &self.entry)?;
        }
        map.end()
    }
}

/// Any top-level document the model understands.
#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Resource(Resource),
    Bundle(Bundle),
}
