//! The work behind each CLI verb, returning what the verb prints.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use pika_core::compiler::{compile, render_source};
use pika_core::platform::CommunityState;
use pika_core::policy::PolicyDocument;
use pika_core::registry::Registry;
use pika_core::scenario::{run_scenario, ScenarioScript};
use pika_core::validate::{validate_policy, validate_structure, ValidationReport};

use crate::parse_json;

/// Validates against a community when one is given, otherwise structurally.
pub fn validate(registry: &Registry, policy: &Path, community: Option<&Path>) -> Result<ValidationReport> {
    let doc: PolicyDocument = parse_json(policy)?;
    Ok(match community {
        Some(path) => {
            let state: CommunityState = parse_json(path)?;
            validate_policy(&doc, registry, &state.snapshot())
        }
        None => validate_structure(&doc, registry),
    })
}

pub fn render(registry: &Registry, policy: &Path) -> Result<String> {
    let doc: PolicyDocument = parse_json(policy)?;
    let source = render_source(&doc, registry).with_context(|| format!("compiling {}", policy.display()))?;
    Ok(source.to_string())
}

/// Runs a scenario and returns its trace as JSON lines. Policies must be
/// valid against the scenario's initial community.
pub fn simulate(registry: Arc<Registry>, scenario: &Path, policies: &[impl AsRef<Path>], seed: Option<u64>) -> Result<String> {
    let mut script: ScenarioScript = parse_json(scenario)?;
    if let Some(seed) = seed {
        script.seed = seed;
    }
    let snapshot = script.initial.snapshot();
    let mut plans = Vec::new();
    for path in policies {
        let path = path.as_ref();
        let doc: PolicyDocument = parse_json(path)?;
        let report = validate_policy(&doc, &registry, &snapshot);
        if !report.is_empty() {
            let lines: Vec<String> = report.diagnostics.iter().map(ToString::to_string).collect();
            bail!("{} is invalid:\n{}", path.display(), lines.join("\n"));
        }
        plans.push(compile(&doc, &registry).with_context(|| format!("compiling {}", path.display()))?);
    }
    let run = run_scenario(&script, &plans, registry).with_context(|| format!("running {}", scenario.display()))?;
    Ok(run.trace_jsonl())
}
