use std::time::Duration;

use anyhow::{bail, Context, Result};

use fhirforge_core::agent::{AgentStep, SessionTrace, TraceReadError};
use fhirforge_core::pipeline;

use crate::args::ReplayArgs;
use crate::render::{clip, step_summary};
use crate::{EXIT_DIVERGENCE, EXIT_OK, EXIT_TRUNCATED};

const MAX_SPEED: f64 = 1000.0;

pub async fn run(args: ReplayArgs) -> Result<u8> {
    if !(0.0..=MAX_SPEED).contains(&args.speed) {
        bail!("--speed must be between 0 and {MAX_SPEED}");
    }
    let trace = match SessionTrace::read(&args.trace) {
        Ok(t) => t,
        Err(e @ (TraceReadError::Truncated(_) | TraceReadError::Malformed { .. })) => {
            eprintln!("error: {}: {e}", args.trace.display());
            return Ok(EXIT_TRUNCATED);
        }
        Err(e) => return Err(e.into()),
    };

    let mut previous: Option<&AgentStep> = None;
    for step in &trace.steps {
        if let Some(prev) = previous {
            let gap = (step.timestamp - prev.timestamp).to_std().unwrap_or(Duration::ZERO);
            if args.speed > 0.0 {
                tokio::time::sleep(gap.mul_f64(args.speed)).await;
            }
        }
        previous = Some(step);
        if !args.quiet {
            println!("{}", step_summary(step));
        }
    }

    let report = pipeline::replay(&trace, &mut |_| {}).await?;
    if let Some(d) = &report.divergence {
        let at = if d.step == 0 { "the end record".to_owned() } else { format!("step {}", d.step) };
        println!("replay divergence at {at} ({})", d.field);
        println!("  recorded: {}", clip(&d.recorded, 200));
        println!("  replayed: {}", clip(&d.replayed, 200));
        return Ok(EXIT_DIVERGENCE);
    }
    if let (Some(out), Some(json)) = (&args.out, &report.bundle_json) {
        std::fs::write(out, json).with_context(|| format!("cannot write {}", out.display()))?;
    }
    let sha = report.replayed_bundle_sha256.as_deref().unwrap_or("-");
    println!("replay ok: {} step(s), status {}, bundle sha256 {sha}", report.steps, report.status);
    Ok(EXIT_OK)
}
