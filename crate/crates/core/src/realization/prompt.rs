// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::grammar::grammar_translate;
use crate::intent_model::{Violation, ViolationCode};

pub const TEMPLATE_ID: &str = "policy-ir-v1";

/// One exemplar per intent kind, in kind order.
pub const EXAMPLE_TEXTS: [&str; 6] = [
    "guarantee latency below 20 ms for service checkout",
    "ensure throughput of service analytics at least 200 mbps",
    "ensure availability of service ledger at least 99.9 percent",
    "limit cpu utilization of node n1 to 80 percent",
    "block traffic from segment guest to segment finance",
    "reserve 200 mbps for service checkout between node n1 and node n3",
];

pub fn context_examples() -> Vec<(String, Value)> {
    EXAMPLE_TEXTS.iter().map(|t| (t.to_string(), grammar_translate(t).expect("exemplar parses"))).collect()
}

const SCHEMA_TEXT: &str = "\
A policy document is a JSON object with exactly these fields:
  schema_version: \"1.0\"
  policy_id, intent_id: non-empty strings
  kind: LatencyBound | ThroughputFloor | AvailabilityFloor | UtilizationCap | AccessControl | BandwidthReservation
  scope: {services, nodes, segments, traffic_class}, each \"*\" or a non-empty array of names
  constraints: array of {kpi, op: LEQ|GEQ, value >= 0, unit}; AccessControl has none, every other kind at least one
    kpi/unit: cpu_util %, ram_util %, storage_util %, svc_throughput mbps, availability_idx index,
              api_latency ms, queue_backlog count, analytics_throughput items/s
  actions: array of {type, params}; types Allow, Deny, ReserveBandwidth, CapUtilization,
    SetPriorityClass, Scale, Reroute, Throttle; AccessControl has exactly one Allow or Deny
  priority: integer 0..100 (default 50)
  activation_mode: {\"mode\": \"Immediate\"} or {\"mode\": \"Canary\", \"fraction\": (0,1]}
Reply with the document only, inside one ```json fenced block.";

/// System message for the translation request.
pub fn render_system_prompt(examples: &[(String, Value)]) -> String {
    let mut out = String::from("You translate network operator intents into policy documents.\n\n");
    out.push_str(SCHEMA_TEXT);
    out.push_str("\n\nExamples:\n");
    for (text, doc) in examples {
        out.push_str(&format!("Intent: {text}\nPolicy: {}\n", crate::canonical::to_canonical_string(doc)));
    }
    out
}

/// Instruction clause for one violation code.
pub fn correction_template(code: ViolationCode) -> &'static str {
    match code {
        ViolationCode::MissingField => "Add the required field at {path}.",
        ViolationCode::UnknownField => "Remove {path}; it is not allowed here.",
        ViolationCode::BadEnum => "Replace the value at {path} with one of the allowed values ({detail}).",
        ViolationCode::BadType => "Fix the type of {path} ({detail}).",
        ViolationCode::UnitMismatch => "Use the catalog unit at {path} ({detail}).",
        ViolationCode::RangeViolation => "Bring {path} into its allowed range ({detail}).",
        ViolationCode::EmptyScopeSet => "Use \"*\" or a non-empty name list at {path}.",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPrompt {
    pub prior_output: Value,
    pub failures: Vec<Violation>,
    pub instruction_text: String,
}

impl CorrectionPrompt {
    /// `None` when there is nothing to correct.
    pub fn build(prior_output: Value, failures: Vec<Violation>) -> Option<Self> {
        if failures.is_empty() {
            return None;
        }
        let mut text = String::from("Your previous policy document failed validation:\n");
        for v in &failures {
            let clause = correction_template(v.code).replace("{path}", &v.path).replace("{detail}", &v.detail);
            text.push_str(&format!("- [{}] {clause}\n", v.code));
        }
        text.push_str("Previous document:\n");
        text.push_str(&crate::canonical::to_canonical_string(&prior_output));
        text.push_str("\nReturn the corrected document.");
        Some(CorrectionPrompt { prior_output, failures, instruction_text: text })
    }
}
