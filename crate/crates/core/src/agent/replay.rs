use serde::Serialize;

use crate::fhir::Bundle;
use crate::llm::ReplayProvider;

use super::{Agent, AgentStatus, AgentStep, SessionTrace, StepObserver};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    /// 1-based step, or 0 for the end record.
    pub step: usize,
    pub field: String,
    pub recorded: String,
    pub replayed: String,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub steps: usize,
    pub status: AgentStatus,
    pub recorded_bundle_sha256: Option<String>,
    pub replayed_bundle_sha256: Option<String>,
    pub bundle: Option<Bundle>,
    pub bundle_json: Option<String>,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.divergence.is_none()
    }
}

fn json(v: &impl Serialize) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn compare_step(rec: &AgentStep, rep: &AgentStep) -> Option<Divergence> {
    let diff = |field: &str, a: String, b: String| {
        (a != b).then(|| Divergence { step: rec.index, field: field.into(), recorded: a, replayed: b })
    };
    diff("thought", rec.thought.clone(), rep.thought.clone())
        .or_else(|| diff("action", json(&rec.action), json(&rep.action)))
        .or_else(|| diff("observation", rec.observation.clone(), rep.observation.clone()))
}

/// Re-runs a recorded session against its own model outputs and checks that
/// every step and the final Bundle come out the same.
pub async fn replay_trace(agent: &Agent, trace: &SessionTrace, observer: StepObserver<'_>) -> ReplayReport {
    let mut provider = ReplayProvider::from_trace(trace);
    // The document itself is not stored; model outputs do not depend on it here.
    let outcome = agent.run_observed("", &mut provider, observer).await;
    let recorded_end = trace.end.as_ref();
    let recorded_sha = recorded_end.and_then(|e| e.bundle_sha256.clone());
    let replayed_sha = outcome.trace.end.as_ref().and_then(|e| e.bundle_sha256.clone());

    let mut divergence = None;
    let (rec, rep) = (&trace.steps, &outcome.trace.steps);
    for (a, b) in rec.iter().zip(rep) {
        if let Some(d) = compare_step(a, b) {
            divergence = Some(d);
            break;
        }
    }
    if divergence.is_none() && rec.len() != rep.len() {
        divergence = Some(Divergence {
            step: rec.len().min(rep.len()) + 1,
            field: "steps".into(),
            recorded: rec.len().to_string(),
            replayed: rep.len().to_string(),
        });
    }
    if divergence.is_none() {
        let rec_status = recorded_end.map(|e| e.status.to_string()).unwrap_or_default();
        if rec_status != outcome.status.to_string() {
            divergence = Some(Divergence {
                step: 0,
                field: "status".into(),
                recorded: rec_status,
                replayed: outcome.status.to_string(),
            });
        } else if recorded_sha != replayed_sha {
            divergence = Some(Divergence {
                step: 0,
                field: "bundle_sha256".into(),
                recorded: recorded_sha.clone().unwrap_or_default(),
                replayed: replayed_sha.clone().unwrap_or_default(),
            });
        }
    }
    ReplayReport {
        steps: rep.len(),
        status: outcome.status,
        recorded_bundle_sha256: recorded_sha,
        replayed_bundle_sha256: replayed_sha,
        bundle: outcome.bundle,
        bundle_json: outcome.bundle_json,
        divergence,
    }
}
