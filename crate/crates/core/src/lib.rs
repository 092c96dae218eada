pub mod agent;
pub mod api;
pub mod corpus;
pub mod eval;
pub mod fhir;
pub mod llm;
pub mod pipeline;
pub mod terminology;
