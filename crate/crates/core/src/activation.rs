// SPDX-License-Identifier: Apache-2.0

//! Enforcement through a domain adapter: apply, probe, canary, rollback.

use serde::{Deserialize, Serialize};

use crate::assurance::{AssuranceVerdict, VerdictLabel};
use crate::config::{ActivationConfig, AssuranceConfig};
use crate::intent_model::{Action, PolicyIr};
use crate::netsim::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCode {
    AdapterUnavailable,
    ProbeTimeout,
    ApplyRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome")]
pub enum ReceiptOutcome {
    Applied,
    Failed { code: FailureCode, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnforcementReceipt {
    pub policy_id: String,
    #[serde(flatten)]
    pub outcome: ReceiptOutcome,
    pub applied_at: u64,
}

impl EnforcementReceipt {
    pub fn applied(policy_id: &str, tick: u64) -> Self {
        EnforcementReceipt { policy_id: policy_id.to_string(), outcome: ReceiptOutcome::Applied, applied_at: tick }
    }

    pub fn failed(policy_id: &str, tick: u64, code: FailureCode, detail: impl Into<String>) -> Self {
        EnforcementReceipt {
            policy_id: policy_id.to_string(),
            outcome: ReceiptOutcome::Failed { code, detail: detail.into() },
            applied_at: tick,
        }
    }

    pub fn is_applied(&self) -> bool {
        self.outcome == ReceiptOutcome::Applied
    }

    pub fn failure_code(&self) -> Option<FailureCode> {
        match &self.outcome {
            ReceiptOutcome::Failed { code, .. } => Some(*code),
            ReceiptOutcome::Applied => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnforcementState {
    ActiveConfirmed { strength: f64 },
    Pending,
    Absent,
}

/// Enforcement boundary. The simulated domain is passed in explicitly so the
/// engine stays the single writer of simulator state.
pub trait DomainAdapter: Send {
    fn apply(&mut self, domain: &mut SimState, policy: &PolicyIr, strength: f64, tick: u64) -> EnforcementReceipt;
    /// Enforces a standalone corrective action under its own id.
    fn apply_action(&mut self, domain: &mut SimState, id: &str, action: &Action, tick: u64) -> EnforcementReceipt;
    fn remove(&mut self, domain: &mut SimState, id: &str, tick: u64) -> EnforcementReceipt;
    fn probe(&self, domain: &SimState, id: &str, tick: u64) -> EnforcementState;
}

/// Adapter that writes straight into the simulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimAdapter;

impl DomainAdapter for SimAdapter {
    fn apply(&mut self, domain: &mut SimState, policy: &PolicyIr, strength: f64, tick: u64) -> EnforcementReceipt {
        match domain.apply_policy(policy, strength) {
            Ok(()) => EnforcementReceipt::applied(&policy.policy_id, tick),
            Err(e) => EnforcementReceipt::failed(&policy.policy_id, tick, FailureCode::ApplyRejected, e.to_string()),
        }
    }

    fn apply_action(&mut self, domain: &mut SimState, id: &str, action: &Action, tick: u64) -> EnforcementReceipt {
        match domain.apply_action(id, action, 1.0) {
            Ok(()) => EnforcementReceipt::applied(id, tick),
            Err(e) => EnforcementReceipt::failed(id, tick, FailureCode::ApplyRejected, e.to_string()),
        }
    }

    fn remove(&mut self, domain: &mut SimState, id: &str, tick: u64) -> EnforcementReceipt {
        domain.remove(id);
        EnforcementReceipt::applied(id, tick)
    }

    fn probe(&self, domain: &SimState, id: &str, _tick: u64) -> EnforcementState {
        match domain.governed_fraction(id) {
            Some(strength) => EnforcementState::ActiveConfirmed { strength },
            None => EnforcementState::Absent,
        }
    }
}

/// Fault schedule for [`ScriptedAdapter`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterScript {
    /// Reject every n-th apply (1-based count over all applies).
    pub reject_every: Option<u32>,
    /// Half-open tick ranges `[from, to)` during which every call fails as
    /// unavailable.
    pub down: Vec<(u64, u64)>,
    /// Ticks after an apply before the probe reports it.
    pub probe_delay: u64,
}

/// Wraps [`SimAdapter`] with scripted rejections, outages and probe delay.
#[derive(Debug, Clone, Default)]
pub struct ScriptedAdapter {
    script: AdapterScript,
    applies: u32,
    applied_at: std::collections::BTreeMap<String, u64>,
}

impl ScriptedAdapter {
    pub fn new(script: AdapterScript) -> Self {
        ScriptedAdapter { script, ..Default::default() }
    }

    fn down(&self, tick: u64) -> bool {
        self.script.down.iter().any(|&(a, b)| (a..b).contains(&tick))
    }

    fn gate(&mut self, id: &str, tick: u64) -> Option<EnforcementReceipt> {
        if self.down(tick) {
            return Some(EnforcementReceipt::failed(id, tick, FailureCode::AdapterUnavailable, "adapter unreachable"));
        }
        self.applies += 1;
        if self.script.reject_every.is_some_and(|n| n > 0 && self.applies.is_multiple_of(n)) {
            return Some(EnforcementReceipt::failed(id, tick, FailureCode::ApplyRejected, "rejected by domain"));
        }
        None
    }
}

impl DomainAdapter for ScriptedAdapter {
    fn apply(&mut self, domain: &mut SimState, policy: &PolicyIr, strength: f64, tick: u64) -> EnforcementReceipt {
        if let Some(r) = self.gate(&policy.policy_id, tick) {
            return r;
        }
        let r = SimAdapter.apply(domain, policy, strength, tick);
        if r.is_applied() {
            self.applied_at.entry(policy.policy_id.clone()).or_insert(tick);
        }
        r
    }

    fn apply_action(&mut self, domain: &mut SimState, id: &str, action: &Action, tick: u64) -> EnforcementReceipt {
        if let Some(r) = self.gate(id, tick) {
            return r;
        }
        let r = SimAdapter.apply_action(domain, id, action, tick);
        if r.is_applied() {
            self.applied_at.entry(id.to_string()).or_insert(tick);
        }
        r
    }

    fn remove(&mut self, domain: &mut SimState, id: &str, tick: u64) -> EnforcementReceipt {
        if self.down(tick) {
            return EnforcementReceipt::failed(id, tick, FailureCode::AdapterUnavailable, "adapter unreachable");
        }
        self.applied_at.remove(id);
        SimAdapter.remove(domain, id, tick)
    }

    fn probe(&self, domain: &SimState, id: &str, tick: u64) -> EnforcementState {
        match SimAdapter.probe(domain, id, tick) {
            EnforcementState::ActiveConfirmed { .. }
                if self.applied_at.get(id).is_some_and(|&t| tick < t + self.script.probe_delay) =>
            {
                EnforcementState::Pending
            }
            s => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanaryVerdict {
    Pending,
    Promoted,
    RolledBack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanaryState {
    pub policy_id: String,
    pub fraction: f64,
    pub started_at: u64,
    pub verdict: CanaryVerdict,
}

/// Result of an activation attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    /// Applied and confirmed by the probe (Immediate mode).
    Confirmed(EnforcementReceipt),
    /// Applied at partial strength, awaiting judgment.
    Canary(EnforcementReceipt, CanaryState),
    /// Applied, probe not yet confirming; re-probe until `deadline`.
    AwaitingProbe {
        receipt: EnforcementReceipt,
        deadline: u64,
    },
    Failed(EnforcementReceipt),
}

/// Applies `policy` and runs the first enforcement probe.
pub fn activate(
    policy: &PolicyIr,
    adapter: &mut dyn DomainAdapter,
    domain: &mut SimState,
    tick: u64,
    cfg: &ActivationConfig,
) -> Activation {
    let strength = policy.activation_mode.strength();
    let receipt = adapter.apply(domain, policy, strength, tick);
    if !receipt.is_applied() {
        return Activation::Failed(receipt);
    }
    if strength < 1.0 {
        let state = CanaryState {
            policy_id: policy.policy_id.clone(),
            fraction: strength,
            started_at: tick,
            verdict: CanaryVerdict::Pending,
        };
        return Activation::Canary(receipt, state);
    }
    match adapter.probe(domain, &policy.policy_id, tick) {
        EnforcementState::ActiveConfirmed { .. } => Activation::Confirmed(receipt),
        _ => Activation::AwaitingProbe { receipt, deadline: tick + cfg.probe_window },
    }
}

/// Re-probe of an activation awaiting confirmation. `None` while still
/// within the probe window.
pub fn recheck_probe(
    policy_id: &str,
    adapter: &dyn DomainAdapter,
    domain: &SimState,
    tick: u64,
    deadline: u64,
) -> Option<Result<(), EnforcementReceipt>> {
    match adapter.probe(domain, policy_id, tick) {
        EnforcementState::ActiveConfirmed { .. } => Some(Ok(())),
        _ if tick >= deadline => Some(Err(EnforcementReceipt::failed(
            policy_id,
            tick,
            FailureCode::ProbeTimeout,
            format!("not confirmed by tick {deadline}"),
        ))),
        _ => None,
    }
}

/// Promotes or rolls back a pending canary. Rolls back early on a blocking
/// signal: the owning intent at risk or out of compliance, or a failed probe.
/// Promotes once the window has elapsed without one.
pub fn judge_canary(
    state: &CanaryState,
    verdicts: &[AssuranceVerdict],
    probe_failures: u32,
    tick: u64,
    cfg: &ActivationConfig,
    assurance: &AssuranceConfig,
) -> CanaryState {
    let regression = verdicts.iter().any(|v| {
        v.issued_at >= state.started_at
            && (v.risk >= assurance.risk_gate || !v.compliant || v.label == VerdictLabel::Violated)
    });
    let verdict = if regression || probe_failures > 0 {
        CanaryVerdict::RolledBack
    } else if tick >= state.started_at + cfg.canary_window {
        CanaryVerdict::Promoted
    } else {
        CanaryVerdict::Pending
    };
    CanaryState { verdict, ..state.clone() }
}

/// Single removal attempt; the caller spreads retries across ticks.
pub fn rollback(
    policy_id: &str,
    adapter: &mut dyn DomainAdapter,
    domain: &mut SimState,
    tick: u64,
) -> EnforcementReceipt {
    adapter.remove(domain, policy_id, tick)
}
