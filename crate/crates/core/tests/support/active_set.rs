// SPDX-License-Identifier: Apache-2.0

//! Random command sequences against a live engine, checking after every
//! command that no two policies in force contradict each other.

use std::collections::BTreeSet;

use loopbench_core::conflict::{classify_policies, ConflictKind, Decision};
use loopbench_core::engine::Engine;
use loopbench_core::events::EventLog;
use loopbench_core::scenario::{s1, ScenarioDoc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEXTS: &[&str] = &[
    "allow traffic from segment public to segment finance",
    "block traffic from segment public to segment finance",
    "allow traffic from segment public to segment admin",
    "block traffic from segment public to segment admin",
    "guarantee latency below 28 ms for service checkout",
    "guarantee latency below 20 ms for service checkout",
    "guarantee latency below 23 ms for service cart",
    "limit cpu utilization of service checkout to 80 percent",
    "limit cpu utilization of node n1 to 60 percent",
    "ensure throughput of service cart at least 40 mbps",
];
const PRIORITIES: &[Option<u8>] = &[None, Some(40), Some(50), Some(80)];

fn doc() -> ScenarioDoc {
    let mut doc = s1();
    doc.intents.clear();
    doc.faults.clear();
    doc
}

/// Pairs in the active set that classify as a contradiction. Pairs whose
/// members were both in `checked` are skipped, since policies are immutable.
pub fn contradictions(e: &Engine, checked: &BTreeSet<String>) -> Vec<(String, String)> {
    let active: Vec<_> = e.store().active_policies().collect();
    let mut out = Vec::new();
    for (i, a) in active.iter().enumerate() {
        for b in &active[i + 1..] {
            if checked.contains(&a.policy_id) && checked.contains(&b.policy_id) {
                continue;
            }
            if classify_policies(a, b).iter().any(|r| r.kind == ConflictKind::Contradiction) {
                out.push((a.policy_id.clone(), b.policy_id.clone()));
            }
        }
    }
    out
}

/// Runs `steps` random submissions, resolutions and ticks. Returns the
/// number of escalations resolved, or a description of the first breach.
pub fn random_walk(seed: u64, steps: usize) -> Result<usize, String> {
    let doc = doc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = doc.engine(seed, EventLog::in_memory()).map_err(|e| e.to_string())?;
    let mut resolved = 0;
    let mut checked = BTreeSet::new();
    for step in 0..steps {
        let open: Vec<String> = e.store().open_escalations().map(|x| x.escalation_id.clone()).collect();
        let roll = rng.random_range(0..10);
        let what = if roll < 5 {
            let mut text = TEXTS.choose(&mut rng).unwrap().to_string();
            if let Some(p) = PRIORITIES.choose(&mut rng).unwrap() {
                text.push_str(&format!(" with priority {p}"));
            }
            e.submit_intent(&text).map_err(|x| format!("step {step}: {x}"))?;
            text
        } else if roll < 8 && !open.is_empty() {
            let id = open.choose(&mut rng).unwrap().clone();
            let decision = match rng.random_range(0..3) {
                0 => Decision::ActivateCandidate,
                1 => Decision::RejectCandidate,
                _ => Decision::SuspendExisting { policy_ids: vec![] },
            };
            let label = format!("resolve {id} {decision:?}");
            e.resolve_escalation(&id, decision).map_err(|x| format!("step {step}: {label}: {x}"))?;
            resolved += 1;
            label
        } else {
            e.step().map_err(|x| format!("step {step}: {x}"))?;
            "tick".to_string()
        };
        let bad = contradictions(&e, &checked);
        if !bad.is_empty() {
            return Err(format!("seed {seed} step {step} ({what}): contradicting active pairs {bad:?}"));
        }
        checked = e.store().active.clone();
    }
    Ok(resolved)
}
