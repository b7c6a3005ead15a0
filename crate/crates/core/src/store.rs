// SPDX-License-Identifier: Apache-2.0

//! Intent store: a pure fold over the event log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assurance::AssuranceVerdict;
use crate::conflict::Decision;
use crate::events::{Approver, EscalationSubject, Event, EventRecord, Operation};
use crate::intent_model::{Intent, IntentState, PolicyIr};
use crate::remediation::{Approval, Execution, RemedialAction, RemediationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyStatus {
    /// Validated, awaiting conflict resolution or activation.
    Pending,
    Active,
    Canary,
    Suspended,
    Rejected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy: PolicyIr,
    pub status: PolicyStatus,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalation {
    pub escalation_id: String,
    pub subject: EscalationSubject,
    pub opened_at: u64,
    pub closed: bool,
    pub resolution: Option<Decision>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentStore {
    pub intents: BTreeMap<String, Intent>,
    pub policies: BTreeMap<String, PolicyRecord>,
    pub active: BTreeSet<String>,
    pub escalations: BTreeMap<String, Escalation>,
    pub plans: BTreeMap<String, RemediationPlan>,
    pub verdicts: BTreeMap<String, AssuranceVerdict>,
    pub head: u64,
}

impl IntentStore {
    pub fn replay<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut s = IntentStore::default();
        for r in records {
            s.apply(r);
        }
        s
    }

    pub fn active_policies(&self) -> impl Iterator<Item = &PolicyIr> {
        self.active.iter().filter_map(|id| self.policies.get(id)).map(|r| &r.policy)
    }

    pub fn policy_for_intent(&self, intent_id: &str) -> Option<&PolicyRecord> {
        self.policies.values().find(|r| r.policy.intent_id == intent_id)
    }

    pub fn open_escalations(&self) -> impl Iterator<Item = &Escalation> {
        self.escalations.values().filter(|e| !e.closed)
    }

    fn set_intent(&mut self, intent_id: &str, state: IntentState) {
        if let Some(i) = self.intents.get_mut(intent_id) {
            // The engine only records legal transitions; a replayed log that
            // violates the machine keeps the prior state.
            let _ = i.transition(state);
        }
    }

    fn set_policy(&mut self, policy_id: &str, status: PolicyStatus) {
        if let Some(p) = self.policies.get_mut(policy_id) {
            p.status = status;
        }
        if matches!(status, PolicyStatus::Active | PolicyStatus::Canary) {
            self.active.insert(policy_id.to_string());
        } else {
            self.active.remove(policy_id);
        }
    }

    fn intent_of(&self, policy_id: &str) -> Option<String> {
        self.policies.get(policy_id).map(|p| p.policy.intent_id.clone())
    }

    /// Takes a policy out of force: an active intent is suspended, any other
    /// is withdrawn.
    fn retire(&mut self, policy_id: &str) {
        self.set_policy(policy_id, PolicyStatus::Suspended);
        if let Some(intent_id) = self.intent_of(policy_id) {
            let state = self.intents.get(&intent_id).map(|i| i.state);
            match state {
                Some(s) if s.can_transition_to(IntentState::Suspended) => {
                    self.set_intent(&intent_id, IntentState::Suspended)
                }
                Some(IntentState::Suspended | IntentState::Withdrawn) | None => {}
                Some(_) => self.set_intent(&intent_id, IntentState::Withdrawn),
            }
        }
    }

    pub fn apply(&mut self, rec: &EventRecord) {
        self.head = rec.seq;
        match &rec.event {
            Event::IntentSubmitted { intent_id, source_text } => {
                self.intents.insert(intent_id.clone(), Intent::new(intent_id.clone(), source_text.clone(), rec.tick));
            }
            Event::IntentRealized { intent_id, policy, .. } => {
                if let Some(i) = self.intents.get_mut(intent_id) {
                    let _ = i.fix_kind(policy.kind);
                }
                self.set_intent(intent_id, IntentState::Realized);
                self.policies.insert(
                    policy.policy_id.clone(),
                    PolicyRecord { policy: policy.clone(), status: PolicyStatus::Pending, strength: 0.0 },
                );
            }
            Event::RealizationFailed { intent_id, .. } => self.set_intent(intent_id, IntentState::Withdrawn),
            Event::ConflictDetected { .. } => {}
            Event::ConflictResolved { policy_id, outcome, escalation_id, suspended } => {
                for r in suspended {
                    self.retire(&r.policy_id);
                }
                if let Some(id) = escalation_id {
                    if let Some(e) = self.escalations.get_mut(id) {
                        e.closed = true;
                        e.resolution = Some(outcome.decision.clone());
                    }
                }
                if let (Some(pid), Decision::RejectCandidate) = (policy_id, &outcome.decision) {
                    self.set_policy(pid, PolicyStatus::Rejected);
                    if let Some(iid) = self.intent_of(pid) {
                        self.set_intent(&iid, IntentState::Withdrawn);
                    }
                }
            }
            Event::Escalated { escalation_id, subject } => {
                if let EscalationSubject::Plan { plan_id, .. } = subject {
                    if let Some(p) = self.plans.get_mut(plan_id) {
                        p.approval = Approval::Rejected;
                    }
                }
                self.escalations.insert(
                    escalation_id.clone(),
                    Escalation {
                        escalation_id: escalation_id.clone(),
                        subject: subject.clone(),
                        opened_at: rec.tick,
                        closed: false,
                        resolution: None,
                    },
                );
            }
            Event::PolicyApplied { policy_id, intent_id, strength, .. } => {
                let status = if *strength < 1.0 { PolicyStatus::Canary } else { PolicyStatus::Active };
                self.set_policy(policy_id, status);
                if let Some(p) = self.policies.get_mut(policy_id) {
                    p.strength = *strength;
                }
                if self.intents.get(intent_id).is_some_and(|i| i.state != IntentState::Active) {
                    self.set_intent(intent_id, IntentState::Active);
                }
            }
            Event::EnforcementFailed { policy_id, operation, .. } => {
                if matches!(operation, Operation::Apply | Operation::Probe) && !self.active.contains(policy_id) {
                    self.set_policy(policy_id, PolicyStatus::Failed);
                }
            }
            Event::DriftFlagged { .. } => {}
            Event::VerdictIssued { verdict } => {
                self.verdicts.insert(verdict.intent_id.clone(), verdict.clone());
            }
            Event::Violation { intent_id, .. } => self.set_intent(intent_id, IntentState::Violated),
            Event::PlanProposed { plan, supersedes, .. } => {
                if let Some(old) = supersedes.as_ref().and_then(|id| self.plans.get_mut(id)) {
                    old.approval = Approval::Rejected;
                }
                self.plans.insert(plan.plan_id.clone(), plan.clone());
            }
            Event::PlanApproved { plan_id, by } => {
                if let Some(p) = self.plans.get_mut(plan_id) {
                    p.approval = match by {
                        Approver::Operator => Approval::Approved,
                        Approver::Auto => Approval::AutoApproved,
                    };
                }
            }
            Event::PlanExecuted { plan_id, action, receipts } => {
                if let Some(p) = self.plans.get_mut(plan_id) {
                    p.execution = Execution::Executed { receipts: receipts.clone() };
                }
                let ok = receipts.iter().all(|r| r.is_applied());
                match action {
                    RemedialAction::Rollback { policy_id } if ok => self.retire(policy_id),
                    RemedialAction::RetryApply { policy_id } if ok => {
                        if let Some(iid) = self.intent_of(policy_id) {
                            self.set_policy(policy_id, PolicyStatus::Active);
                            if let Some(p) = self.policies.get_mut(policy_id) {
                                p.strength = 1.0;
                            }
                            self.set_intent(&iid, IntentState::Active);
                        }
                    }
                    _ => {}
                }
            }
            Event::PlanVerified { plan_id, improved, .. } => {
                if let Some(p) = self.plans.get_mut(plan_id) {
                    p.execution = if *improved { Execution::VerifiedImproved } else { Execution::RolledBack };
                }
            }
            Event::CanaryPromoted { policy_id, .. } => {
                self.set_policy(policy_id, PolicyStatus::Active);
                if let Some(p) = self.policies.get_mut(policy_id) {
                    p.strength = 1.0;
                }
            }
            Event::CanaryRolledBack { policy_id, .. } => self.retire(policy_id),
        }
    }
}
