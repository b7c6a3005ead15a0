// SPDX-License-Identifier: Apache-2.0

//! The closed loop: a single-writer engine that owns the simulated domain,
//! the event log and the intent store, and advances one tick at a time.
//!
//! Every state change is recorded as exactly one event, and the store is a
//! fold of the log. An engine opened over a non-empty log re-executes in
//! verification mode: emitted events are compared against the recorded
//! prefix instead of being appended, and appending resumes past its end.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::activation::{
    activate, judge_canary, recheck_probe, rollback, Activation, CanaryState, CanaryVerdict, DomainAdapter,
    EnforcementReceipt, EnforcementState, FailureCode,
};
use crate::assurance::{
    disambiguate, estimate_lead_time, predict_risk, verify_compliance, AssuranceVerdict, Compliance, Disambiguated,
    DriftMonitor, DriftTransition, VerdictLabel,
};
use crate::config::LoopConfig;
use crate::conflict::{
    check_feasibility, classify_pair, resolve, ConflictReport, Decision, RationaleCode, ResolutionOutcome, Severity,
};
use crate::events::{Approver, EscalationSubject, Event, EventLog, EventRecord, FailureReason, LogError, Operation};
use crate::intent_model::{extract_metadata, Intent, IntentState, PolicyIr, PolicyMetadata};
use crate::netsim::SimState;
use crate::realization::{realize, Translator};
use crate::remediation::{
    build_context, compose_plan, needs_plan, predicted_impact, verified_improved, Approval, AssuranceContext, Composer,
    ContextInputs, Execution, PlanTrigger, RemedialAction, RemediationPlan,
};
use crate::store::{IntentStore, PolicyStatus};
use crate::telemetry::{TelemetryError, TelemetryStore, CSV_HEADER};

/// Longest accepted intent text, in bytes.
pub const MAX_INTENT_BYTES: usize = 1024;

/// Change in expected crossing tick that warrants a fresh verdict.
const LEAD_SHIFT: u64 = 3;
/// Risk change that warrants a fresh verdict.
const RISK_SHIFT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replay diverged at seq {seq}: recorded {recorded}, re-executed {produced}")]
    Diverged { seq: u64, recorded: String, produced: String },
    #[error("kpi export: {0}")]
    Export(#[from] csv::Error),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Result of the inline submission path.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome")]
pub enum SubmitOutcome {
    /// Enforced, or applied and awaiting its probe.
    Applied {
        intent_id: String,
        policy_id: String,
        confirmed: bool,
    },
    Escalated {
        intent_id: String,
        policy_id: String,
        escalation_id: String,
    },
    Rejected {
        intent_id: String,
        detail: Value,
    },
    Unavailable {
        intent_id: String,
        policy_id: String,
        receipt: EnforcementReceipt,
    },
}

impl SubmitOutcome {
    pub fn intent_id(&self) -> &str {
        match self {
            SubmitOutcome::Applied { intent_id, .. }
            | SubmitOutcome::Escalated { intent_id, .. }
            | SubmitOutcome::Rejected { intent_id, .. }
            | SubmitOutcome::Unavailable { intent_id, .. } => intent_id,
        }
    }
}

/// Result of an operator command on an escalation or plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome")]
pub enum DecisionOutcome {
    Closed {
        escalation_id: String,
    },
    Activated {
        policy_id: String,
        suspended: Vec<String>,
    },
    Rejected {
        policy_id: String,
    },
    Unavailable {
        receipt: EnforcementReceipt,
    },
    PlanExecuted {
        plan_id: String,
    },
    /// Approved; execution waits for the adapter.
    PlanQueued {
        plan_id: String,
    },
    PlanSuperseded {
        plan_id: String,
        next_plan_id: String,
    },
    PlanEscalated {
        plan_id: String,
        escalation_id: String,
    },
}

pub struct EngineParts {
    pub config: LoopConfig,
    pub sim: SimState,
    pub adapter: Box<dyn DomainAdapter>,
    pub translator: Box<dyn Translator>,
    pub composer: Box<dyn Composer + Send>,
}

#[derive(Debug, Clone)]
struct PendingProbe {
    intent_id: String,
    deadline: u64,
    decision: Decision,
    receipt: EnforcementReceipt,
}

#[derive(Debug, Clone)]
struct Canary {
    intent_id: String,
    state: CanaryState,
    probe_failures: u32,
}

#[derive(Debug, Clone)]
struct PendingRemoval {
    intent_id: String,
    attempts: u32,
    reason: String,
}

#[derive(Debug, Clone)]
struct InFlight {
    plan_id: String,
    executed_at: u64,
    risk_before: f64,
    compliant_before: bool,
}

#[derive(Debug, Clone)]
struct Assessment {
    verdict: AssuranceVerdict,
    compliance: Compliance,
}

pub struct Engine {
    cfg: LoopConfig,
    sim: SimState,
    adapter: Box<dyn DomainAdapter>,
    translator: Box<dyn Translator>,
    composer: Box<dyn Composer + Send>,
    log: EventLog,
    /// Length of the recorded prefix still to be verified.
    recorded: usize,
    verified: usize,
    store: IntentStore,
    telemetry: TelemetryStore,
    drift: DriftMonitor,
    kpi_sink: Option<csv::Writer<Box<dyn Write + Send>>>,
    clock: u64,
    metadata: BTreeMap<String, PolicyMetadata>,
    probes: BTreeMap<String, PendingProbe>,
    canaries: BTreeMap<String, Canary>,
    removals: BTreeMap<String, PendingRemoval>,
    in_flight: BTreeMap<String, InFlight>,
    cooldown_until: BTreeMap<String, u64>,
    failures: BTreeMap<String, EnforcementReceipt>,
    emitted: BTreeMap<String, AssuranceVerdict>,
    assessed: BTreeMap<String, Assessment>,
}

impl Engine {
    /// Builds an engine over `log`. Records already in the log are verified
    /// against re-execution rather than appended.
    pub fn new(parts: EngineParts, log: EventLog) -> Self {
        let recorded = log.records().len();
        let clock = parts.sim.tick;
        Engine {
            telemetry: TelemetryStore::new(parts.config.telemetry.retention),
            drift: DriftMonitor::new(parts.config.assurance.clone()),
            cfg: parts.config,
            sim: parts.sim,
            adapter: parts.adapter,
            translator: parts.translator,
            composer: parts.composer,
            log,
            recorded,
            verified: 0,
            store: IntentStore::default(),
            kpi_sink: None,
            clock,
            metadata: BTreeMap::new(),
            probes: BTreeMap::new(),
            canaries: BTreeMap::new(),
            removals: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            cooldown_until: BTreeMap::new(),
            failures: BTreeMap::new(),
            emitted: BTreeMap::new(),
            assessed: BTreeMap::new(),
        }
    }

    /// Streams every generated sample to `out` as KPI CSV.
    pub fn export_kpis(&mut self, out: Box<dyn Write + Send>) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        self.kpi_sink = Some(w);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), EngineError> {
        if let Some(w) = &mut self.kpi_sink {
            w.flush().map_err(csv::Error::from)?;
        }
        Ok(())
    }

    pub fn tick(&self) -> u64 {
        self.clock
    }

    pub fn store(&self) -> &IntentStore {
        &self.store
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn drift(&self) -> &DriftMonitor {
        &self.drift
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    /// True while re-execution has not yet caught up with the recorded log.
    pub fn replaying(&self) -> bool {
        self.verified < self.recorded
    }

    fn emit(&mut self, event: Event) -> Result<(), EngineError> {
        if self.verified < self.recorded {
            let recorded = &self.log.records()[self.verified];
            let produced = EventRecord { seq: self.verified as u64 + 1, tick: self.clock, event };
            let (a, b) = (recorded.to_line(), produced.to_line());
            if a != b {
                return Err(EngineError::Diverged { seq: produced.seq, recorded: a, produced: b });
            }
            self.verified += 1;
            self.store.apply(&produced);
            return Ok(());
        }
        let rec = self.log.append(self.clock, event)?;
        self.store.apply(rec);
        Ok(())
    }

    fn next_id(prefix: &str, taken: usize) -> String {
        format!("{prefix}-{}", taken + 1)
    }

    // ---- inline path -------------------------------------------------------

    pub fn submit_intent(&mut self, text: &str) -> Result<SubmitOutcome, CommandError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(CommandError::BadRequest("intent text is empty".into()));
        }
        if text.len() > MAX_INTENT_BYTES {
            return Err(CommandError::BadRequest(format!("intent text exceeds {MAX_INTENT_BYTES} bytes")));
        }
        let intent_id = Self::next_id("int", self.store.intents.len());
        self.emit(Event::IntentSubmitted { intent_id: intent_id.clone(), source_text: text.to_string() })?;

        let intent = Intent::new(intent_id.clone(), text, self.clock);
        let realized = match realize(&intent, self.translator.as_mut(), &self.cfg.realization) {
            Ok(r) => r,
            Err(failure) => {
                let detail = json!({ "realization": &failure });
                self.emit(Event::RealizationFailed {
                    intent_id: intent_id.clone(),
                    reason: FailureReason::Translation { failure },
                })?;
                return Ok(SubmitOutcome::Rejected { intent_id, detail });
            }
        };
        let policy = realized.policy;
        let meta = match extract_metadata(&policy, &self.sim.topology) {
            Ok(m) => m,
            Err(e) => {
                let detail = json!({ "scope": &e });
                self.emit(Event::RealizationFailed {
                    intent_id: intent_id.clone(),
                    reason: FailureReason::ScopeResolvesEmpty { detail: e },
                })?;
                return Ok(SubmitOutcome::Rejected { intent_id, detail });
            }
        };
        let policy_id = policy.policy_id.clone();
        self.metadata.insert(policy_id.clone(), meta);
        self.emit(Event::IntentRealized {
            intent_id: intent_id.clone(),
            policy: policy.clone(),
            translator_id: realized.translator_id,
            attempts: realized.attempts,
        })?;

        let reports = self.conflicts(&policy);
        if !reports.is_empty() {
            self.emit(Event::ConflictDetected { policy_id: policy_id.clone(), reports: reports.clone() })?;
        }
        let existing: BTreeMap<String, PolicyIr> =
            self.enforced_ids().into_iter().filter_map(|id| self.policy(&id).map(|p| (id, p.clone()))).collect();
        let outcome = resolve(&reports, &policy, &existing);
        match outcome.decision.clone() {
            Decision::ActivateCandidate => {
                if !reports.is_empty() {
                    self.emit(Event::ConflictResolved {
                        policy_id: Some(policy_id.clone()),
                        outcome,
                        escalation_id: None,
                        suspended: vec![],
                    })?;
                }
                self.enforce(&policy, Decision::ActivateCandidate)
            }
            Decision::RejectCandidate => {
                let detail = json!({ "reports": &reports, "resolution": &outcome });
                self.emit(Event::ConflictResolved {
                    policy_id: Some(policy_id),
                    outcome,
                    escalation_id: None,
                    suspended: vec![],
                })?;
                Ok(SubmitOutcome::Rejected { intent_id, detail })
            }
            Decision::Escalate => {
                let escalation_id = Self::next_id("esc", self.store.escalations.len());
                self.emit(Event::Escalated {
                    escalation_id: escalation_id.clone(),
                    subject: EscalationSubject::Conflict {
                        policy_id: policy_id.clone(),
                        intent_id: intent_id.clone(),
                        reports,
                        outcome,
                    },
                })?;
                Ok(SubmitOutcome::Escalated { intent_id, policy_id, escalation_id })
            }
            Decision::SuspendExisting { policy_ids } => {
                let suspended = match self.suspend_all(&policy_ids)? {
                    Ok(receipts) => receipts,
                    Err(receipt) => return Ok(SubmitOutcome::Unavailable { intent_id, policy_id, receipt }),
                };
                let decision = outcome.decision.clone();
                self.emit(Event::ConflictResolved {
                    policy_id: Some(policy_id.clone()),
                    outcome,
                    escalation_id: None,
                    suspended,
                })?;
                self.enforce(&policy, decision)
            }
        }
    }

    fn policy(&self, policy_id: &str) -> Option<&PolicyIr> {
        self.store.policies.get(policy_id).map(|r| &r.policy)
    }

    /// Policies in force: the active set plus applies awaiting their probe.
    fn enforced_ids(&self) -> BTreeSet<String> {
        let mut ids = self.store.active.clone();
        ids.extend(self.probes.keys().cloned());
        ids
    }

    fn conflicts(&self, candidate: &PolicyIr) -> Vec<ConflictReport> {
        let Some(cmeta) = self.metadata.get(&candidate.policy_id) else { return vec![] };
        let mut reports = Vec::new();
        let enforced = self.enforced_ids();
        for id in enforced.iter().filter(|id| **id != candidate.policy_id) {
            let (Some(p), Some(m)) = (self.policy(id), self.metadata.get(id)) else { continue };
            // Metadata shares one topology version for the engine's lifetime.
            if let Ok(r) = classify_pair((candidate, cmeta), (p, m)) {
                reports.extend(r);
            }
        }
        let active: Vec<&PolicyIr> = enforced.iter().filter_map(|id| self.policy(id)).collect();
        if let Ok(r) = check_feasibility(candidate, active, &self.sim.topology) {
            reports.extend(r);
        }
        reports
    }

    /// Removes every listed policy from the domain. On the first failure the
    /// ones already removed are restored and the failed receipt returned.
    fn suspend_all(
        &mut self,
        ids: &[String],
    ) -> Result<Result<Vec<EnforcementReceipt>, EnforcementReceipt>, EngineError> {
        let mut done: Vec<EnforcementReceipt> = Vec::new();
        for id in ids {
            let receipt = rollback(id, self.adapter.as_mut(), &mut self.sim, self.clock);
            if receipt.is_applied() {
                self.forget_runtime(id);
                done.push(receipt);
                continue;
            }
            for r in &done {
                if let Some(p) = self.policy(&r.policy_id).cloned() {
                    let strength = self.store.policies.get(&p.policy_id).map_or(1.0, |rec| rec.strength);
                    self.adapter.apply(&mut self.sim, &p, strength, self.clock);
                }
            }
            let intent_id = self.policy(id).map(|p| p.intent_id.clone()).unwrap_or_default();
            self.emit(Event::EnforcementFailed {
                policy_id: id.clone(),
                intent_id,
                operation: Operation::Remove,
                receipt: receipt.clone(),
            })?;
            return Ok(Err(receipt));
        }
        Ok(Ok(done))
    }

    fn forget_runtime(&mut self, policy_id: &str) {
        self.probes.remove(policy_id);
        self.canaries.remove(policy_id);
        self.removals.remove(policy_id);
    }

    /// Applies an admitted policy and records the result.
    fn enforce(&mut self, policy: &PolicyIr, decision: Decision) -> Result<SubmitOutcome, CommandError> {
        let (intent_id, policy_id) = (policy.intent_id.clone(), policy.policy_id.clone());
        let tick = self.clock;
        match activate(policy, self.adapter.as_mut(), &mut self.sim, tick, &self.cfg.activation) {
            Activation::Confirmed(receipt) => {
                self.failures.remove(&policy_id);
                self.emit(Event::PolicyApplied {
                    policy_id: policy_id.clone(),
                    intent_id: intent_id.clone(),
                    strength: 1.0,
                    decision,
                    receipt,
                })?;
                Ok(SubmitOutcome::Applied { intent_id, policy_id, confirmed: true })
            }
            Activation::Canary(receipt, state) => {
                self.failures.remove(&policy_id);
                self.emit(Event::PolicyApplied {
                    policy_id: policy_id.clone(),
                    intent_id: intent_id.clone(),
                    strength: state.fraction,
                    decision,
                    receipt,
                })?;
                self.canaries
                    .insert(policy_id.clone(), Canary { intent_id: intent_id.clone(), state, probe_failures: 0 });
                Ok(SubmitOutcome::Applied { intent_id, policy_id, confirmed: true })
            }
            Activation::AwaitingProbe { receipt, deadline } => {
                self.probes.insert(
                    policy_id.clone(),
                    PendingProbe { intent_id: intent_id.clone(), deadline, decision, receipt },
                );
                Ok(SubmitOutcome::Applied { intent_id, policy_id, confirmed: false })
            }
            Activation::Failed(receipt) => {
                self.emit(Event::EnforcementFailed {
                    policy_id: policy_id.clone(),
                    intent_id: intent_id.clone(),
                    operation: Operation::Apply,
                    receipt: receipt.clone(),
                })?;
                self.enforcement_failed(&intent_id, receipt.clone())?;
                match receipt.failure_code() {
                    Some(FailureCode::AdapterUnavailable) => {
                        Ok(SubmitOutcome::Unavailable { intent_id, policy_id, receipt })
                    }
                    _ => Ok(SubmitOutcome::Rejected { intent_id, detail: json!({ "receipt": receipt }) }),
                }
            }
        }
    }

    fn enforcement_failed(&mut self, intent_id: &str, receipt: EnforcementReceipt) -> Result<(), EngineError> {
        self.failures.insert(receipt.policy_id.clone(), receipt.clone());
        if self.cfg.remediation.enabled && !self.has_open_plan(intent_id) {
            self.propose(PlanTrigger::EnforcementFailure { intent_id: intent_id.to_string(), receipt }, None)?;
        }
        Ok(())
    }

    // ---- operator commands -------------------------------------------------

    pub fn resolve_escalation(
        &mut self,
        escalation_id: &str,
        decision: Decision,
    ) -> Result<DecisionOutcome, CommandError> {
        let esc = self
            .store
            .escalations
            .get(escalation_id)
            .cloned()
            .ok_or_else(|| CommandError::NotFound(escalation_id.to_string()))?;
        if esc.closed {
            return Err(CommandError::Conflict(format!("{escalation_id} is already closed")));
        }
        if decision == Decision::Escalate {
            return Err(CommandError::BadRequest("Escalate is not an operator decision".into()));
        }
        let operator = |decision: Decision, detail: &str| ResolutionOutcome {
            decision,
            rationale: RationaleCode::OperatorDecision,
            detail: detail.to_string(),
            warnings: vec![],
        };
        let EscalationSubject::Conflict { policy_id, .. } = &esc.subject else {
            self.emit(Event::ConflictResolved {
                policy_id: None,
                outcome: operator(decision, "closed by operator"),
                escalation_id: Some(escalation_id.to_string()),
                suspended: vec![],
            })?;
            return Ok(DecisionOutcome::Closed { escalation_id: escalation_id.to_string() });
        };
        let policy = self.policy(policy_id).cloned().ok_or_else(|| CommandError::NotFound(policy_id.clone()))?;
        if decision == Decision::RejectCandidate {
            self.emit(Event::ConflictResolved {
                policy_id: Some(policy.policy_id.clone()),
                outcome: operator(Decision::RejectCandidate, "rejected by operator"),
                escalation_id: Some(escalation_id.to_string()),
                suspended: vec![],
            })?;
            return Ok(DecisionOutcome::Rejected { policy_id: policy.policy_id });
        }
        // Activation: whatever contradicts the candidate now is suspended,
        // which keeps the active set free of contradictions.
        let losers: Vec<String> = self
            .conflicts(&policy)
            .into_iter()
            .filter(|r| r.severity == Severity::Blocking)
            .filter_map(|r| r.existing_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let suspended = match self.suspend_all(&losers)? {
            Ok(r) => r,
            Err(receipt) => return Ok(DecisionOutcome::Unavailable { receipt }),
        };
        let decision = if losers.is_empty() {
            Decision::ActivateCandidate
        } else {
            Decision::SuspendExisting { policy_ids: losers.clone() }
        };
        self.emit(Event::ConflictResolved {
            policy_id: Some(policy.policy_id.clone()),
            outcome: operator(decision.clone(), "activated by operator"),
            escalation_id: Some(escalation_id.to_string()),
            suspended,
        })?;
        match self.enforce(&policy, decision)? {
            SubmitOutcome::Unavailable { receipt, .. } => Ok(DecisionOutcome::Unavailable { receipt }),
            _ => Ok(DecisionOutcome::Activated { policy_id: policy.policy_id, suspended: losers }),
        }
    }

    pub fn decide_plan(&mut self, plan_id: &str, approve: bool) -> Result<DecisionOutcome, CommandError> {
        let plan = self.store.plans.get(plan_id).cloned().ok_or_else(|| CommandError::NotFound(plan_id.to_string()))?;
        if plan.approval != Approval::PendingOperator {
            return Err(CommandError::Conflict(format!("{plan_id} is not awaiting a decision")));
        }
        if approve {
            self.emit(Event::PlanApproved { plan_id: plan_id.to_string(), by: Approver::Operator })?;
            return Ok(if self.execute(plan_id)? {
                DecisionOutcome::PlanExecuted { plan_id: plan_id.to_string() }
            } else {
                DecisionOutcome::PlanQueued { plan_id: plan_id.to_string() }
            });
        }
        let next = plan.selected + 1;
        if next < plan.candidates.len() {
            let next_id =
                self.propose_candidates(plan.trigger.clone(), plan.candidates.clone(), next, Some(plan_id))?;
            return Ok(DecisionOutcome::PlanSuperseded { plan_id: plan_id.to_string(), next_plan_id: next_id });
        }
        let escalation_id = Self::next_id("esc", self.store.escalations.len());
        self.emit(Event::Escalated {
            escalation_id: escalation_id.clone(),
            subject: EscalationSubject::Plan { plan_id: plan_id.to_string(), intent_id: plan.intent_id().to_string() },
        })?;
        Ok(DecisionOutcome::PlanEscalated { plan_id: plan_id.to_string(), escalation_id })
    }

    // ---- the tick ----------------------------------------------------------

    /// Advances the domain one tick and runs one pass of the loop.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.clock = self.sim.tick;
        let samples = self.sim.step();
        for s in &samples {
            if let Some(w) = &mut self.kpi_sink {
                w.write_record([s.resource_id.as_str(), s.kpi.as_str(), &s.tick.to_string(), &s.value.to_string()])?;
            }
            self.telemetry.ingest(s)?;
            if self.drift.observe(s) == DriftTransition::Flagged {
                let st = self.drift.states()[&(s.resource_id.clone(), s.kpi)];
                self.emit(Event::DriftFlagged {
                    resource: s.resource_id.clone(),
                    kpi: s.kpi,
                    onset_tick: st.onset_tick.unwrap_or(s.tick),
                    d: st.d,
                    score: st.score,
                })?;
            }
        }
        self.check_probes()?;
        self.assess()?;
        // Retries first, so a removal started by this tick's judgment gets
        // its next attempt on the following tick.
        self.retry_removals()?;
        self.judge_canaries()?;
        if self.cfg.remediation.enabled {
            self.verify_plans()?;
            self.run_ready_plans()?;
            self.plan_for_verdicts()?;
        }
        self.clock = self.sim.tick;
        Ok(())
    }

    fn check_probes(&mut self) -> Result<(), EngineError> {
        let pending: Vec<(String, PendingProbe)> = self.probes.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (policy_id, p) in pending {
            match recheck_probe(&policy_id, self.adapter.as_ref(), &self.sim, self.clock, p.deadline) {
                None => {}
                Some(Ok(())) => {
                    self.probes.remove(&policy_id);
                    self.failures.remove(&policy_id);
                    self.emit(Event::PolicyApplied {
                        policy_id,
                        intent_id: p.intent_id,
                        strength: 1.0,
                        decision: p.decision,
                        receipt: p.receipt,
                    })?;
                }
                Some(Err(receipt)) => {
                    self.probes.remove(&policy_id);
                    // Clear whatever partial state the adapter holds.
                    rollback(&policy_id, self.adapter.as_mut(), &mut self.sim, self.clock);
                    self.emit(Event::EnforcementFailed {
                        policy_id: policy_id.clone(),
                        intent_id: p.intent_id.clone(),
                        operation: Operation::Probe,
                        receipt: receipt.clone(),
                    })?;
                    self.enforcement_failed(&p.intent_id, receipt)?;
                }
            }
        }
        Ok(())
    }

    /// Live intents whose policy is in force.
    fn assured(&self) -> Vec<(String, String)> {
        self.store
            .active
            .iter()
            .filter_map(|pid| {
                let iid = &self.store.policies[pid].policy.intent_id;
                let live = self.store.intents.get(iid).is_some_and(|i| i.state.is_live());
                live.then(|| (iid.clone(), pid.clone()))
            })
            .collect()
    }

    fn assess(&mut self) -> Result<(), EngineError> {
        let acfg = &self.cfg.assurance;
        let tick = self.clock;
        let mut computed: BTreeMap<String, (String, Compliance, f64, Vec<crate::assurance::Attribution>)> =
            BTreeMap::new();
        for (intent_id, policy_id) in self.assured() {
            let (Some(policy), Some(meta)) = (self.policy(&policy_id), self.metadata.get(&policy_id)) else { continue };
            let compliance = verify_compliance(policy, meta, |r, k| self.telemetry.latest(r, k).map(|x| x.1));
            let (mut risk, attribution) = predict_risk(policy, meta, self.drift.states(), acfg);
            if matches!(compliance, Compliance::Breached(_)) {
                risk = 1.0;
            }
            computed.insert(intent_id, (policy_id, compliance, risk, attribution));
        }

        let at_risk: BTreeMap<String, &PolicyMetadata> = computed
            .iter()
            .filter(|(_, c)| c.2 >= acfg.risk_gate)
            .map(|(iid, c)| (iid.clone(), &self.metadata[&c.0]))
            .collect();
        let labels = if at_risk.len() >= 2 {
            disambiguate(&at_risk, &self.sim.topology, self.drift.states())
        } else {
            at_risk.keys().map(|k| (k.clone(), Disambiguated::AtRisk)).collect()
        };

        let mut assessed = BTreeMap::new();
        for (intent_id, (policy_id, compliance, risk, attribution)) in computed {
            let breached = matches!(compliance, Compliance::Breached(_));
            let (label, root_cause_ref) = match labels.get(&intent_id) {
                _ if breached => (VerdictLabel::Violated, None),
                None => (VerdictLabel::Healthy, None),
                Some(Disambiguated::AtRisk) => (VerdictLabel::AtRisk, None),
                Some(Disambiguated::RootCause) => (VerdictLabel::RootCause, None),
                Some(Disambiguated::Victim { root_cause_ref }) => (VerdictLabel::Victim, Some(root_cause_ref.clone())),
            };
            let lead_time_ticks = if !breached && risk >= acfg.risk_gate {
                let policy = &self.store.policies[&policy_id].policy;
                estimate_lead_time(
                    policy,
                    &self.metadata[&policy_id],
                    |r, k| self.telemetry.window(r, k, acfg.slope_window).ok(),
                    acfg,
                )
            } else {
                None
            };
            let verdict = AssuranceVerdict {
                intent_id: intent_id.clone(),
                risk,
                label,
                attribution,
                lead_time_ticks,
                horizon: acfg.horizon,
                issued_at: tick,
                root_cause_ref,
                compliant: !breached,
            };
            assessed.insert(intent_id, Assessment { verdict, compliance });
        }

        for (intent_id, a) in &assessed {
            if self.emitted.get(intent_id).is_none_or(|prev| material_change(prev, &a.verdict)) {
                self.emitted.insert(intent_id.clone(), a.verdict.clone());
                self.emit(Event::VerdictIssued { verdict: a.verdict.clone() })?;
            }
            if let Compliance::Breached(breaches) = &a.compliance {
                if self.store.intents.get(intent_id).is_some_and(|i| i.state == IntentState::Active) {
                    self.emit(Event::Violation { intent_id: intent_id.clone(), breaches: breaches.clone() })?;
                }
            }
        }
        // Intents no longer assured restart from a clean slate if re-enforced.
        self.emitted.retain(|k, _| assessed.contains_key(k));
        self.assessed = assessed;
        Ok(())
    }

    fn judge_canaries(&mut self) -> Result<(), EngineError> {
        let ids: Vec<String> = self.canaries.keys().cloned().collect();
        for policy_id in ids {
            let mut c = self.canaries[&policy_id].clone();
            if self.adapter.probe(&self.sim, &policy_id, self.clock) == EnforcementState::Absent {
                c.probe_failures += 1;
            }
            let verdicts: Vec<AssuranceVerdict> =
                self.assessed.get(&c.intent_id).map(|a| a.verdict.clone()).into_iter().collect();
            let judged = judge_canary(
                &c.state,
                &verdicts,
                c.probe_failures,
                self.clock,
                &self.cfg.activation,
                &self.cfg.assurance,
            );
            match judged.verdict {
                CanaryVerdict::Pending => {
                    self.canaries.insert(policy_id, c);
                }
                CanaryVerdict::Promoted => {
                    self.canaries.remove(&policy_id);
                    let Some(policy) = self.policy(&policy_id).cloned() else { continue };
                    let receipt = self.adapter.apply(&mut self.sim, &policy, 1.0, self.clock);
                    if receipt.is_applied() {
                        self.emit(Event::CanaryPromoted { policy_id, receipt })?;
                    } else {
                        self.emit(Event::EnforcementFailed {
                            policy_id: policy_id.clone(),
                            intent_id: c.intent_id.clone(),
                            operation: Operation::Apply,
                            receipt,
                        })?;
                        self.start_removal(&policy_id, &c.intent_id, "promotion failed")?;
                    }
                }
                CanaryVerdict::RolledBack => {
                    self.canaries.remove(&policy_id);
                    let reason = if c.probe_failures > 0 { "probe failed" } else { "intent regressed" };
                    self.start_removal(&policy_id, &c.intent_id, reason)?;
                }
            }
        }
        Ok(())
    }

    fn start_removal(&mut self, policy_id: &str, intent_id: &str, reason: &str) -> Result<(), EngineError> {
        self.removals.insert(
            policy_id.to_string(),
            PendingRemoval { intent_id: intent_id.to_string(), attempts: 0, reason: reason.to_string() },
        );
        self.attempt_removal(policy_id)
    }

    fn retry_removals(&mut self) -> Result<(), EngineError> {
        let ids: Vec<String> = self.removals.iter().filter(|(_, r)| r.attempts > 0).map(|(k, _)| k.clone()).collect();
        for id in ids {
            self.attempt_removal(&id)?;
        }
        Ok(())
    }

    /// One removal attempt per tick; after the configured number of failures
    /// the removal goes to the operator.
    fn attempt_removal(&mut self, policy_id: &str) -> Result<(), EngineError> {
        let Some(mut r) = self.removals.remove(policy_id) else { return Ok(()) };
        let receipt = rollback(policy_id, self.adapter.as_mut(), &mut self.sim, self.clock);
        if receipt.is_applied() {
            return self.emit(Event::CanaryRolledBack {
                policy_id: policy_id.to_string(),
                intent_id: r.intent_id,
                reason: r.reason,
                receipt,
            });
        }
        r.attempts += 1;
        self.emit(Event::EnforcementFailed {
            policy_id: policy_id.to_string(),
            intent_id: r.intent_id.clone(),
            operation: Operation::Remove,
            receipt,
        })?;
        if r.attempts >= self.cfg.activation.remove_retries {
            let escalation_id = Self::next_id("esc", self.store.escalations.len());
            return self.emit(Event::Escalated {
                escalation_id,
                subject: EscalationSubject::Removal { policy_id: policy_id.to_string(), intent_id: r.intent_id },
            });
        }
        self.removals.insert(policy_id.to_string(), r);
        Ok(())
    }

    // ---- remediation -------------------------------------------------------

    fn has_open_plan(&self, intent_id: &str) -> bool {
        self.store.plans.values().any(|p| p.intent_id() == intent_id && p.is_open())
    }

    fn context(&self) -> AssuranceContext {
        let inputs = ContextInputs {
            domain: &self.sim,
            intents: self.store.intents.values().map(|i| (i.id.clone(), i.state)).collect(),
            drift: self.drift.states(),
            verdicts: self.assessed.values().map(|a| a.verdict.clone()).collect(),
            enforcement_failures: self.failures.values().cloned().collect(),
            policies: self
                .store
                .policies
                .values()
                .filter(|r| matches!(r.status, PolicyStatus::Active | PolicyStatus::Canary | PolicyStatus::Failed))
                .map(|r| r.policy.clone())
                .collect(),
        };
        build_context(inputs, &self.cfg.remediation)
    }

    fn propose(&mut self, trigger: PlanTrigger, supersedes: Option<&str>) -> Result<Option<String>, EngineError> {
        let ctx = self.context();
        let policy = self.store.policy_for_intent(trigger.intent_id()).map(|r| r.policy.clone());
        let (sim, drift, metadata) = (&self.sim, &self.drift, &self.metadata);
        let mut impact = |a: &crate::intent_model::Action| match &policy {
            Some(p) => metadata.get(&p.policy_id).map_or(0.0, |m| predicted_impact(sim, p, m, drift.baselines(), a)),
            None => 0.0,
        };
        let composed = compose_plan(
            &ctx,
            &trigger,
            &self.sim.topology,
            self.composer.as_ref(),
            &mut impact,
            &self.cfg.remediation,
        );
        match composed {
            Ok(candidates) => Ok(Some(self.propose_candidates(trigger, candidates, 0, supersedes)?)),
            Err(e) => {
                let intent_id = trigger.intent_id().to_string();
                self.cooldown_until.insert(intent_id.clone(), self.clock + self.cfg.remediation.cooldown());
                let escalation_id = Self::next_id("esc", self.store.escalations.len());
                self.emit(Event::Escalated {
                    escalation_id,
                    subject: EscalationSubject::NoTemplate { intent_id, detail: e.to_string() },
                })?;
                Ok(None)
            }
        }
    }

    fn propose_candidates(
        &mut self,
        trigger: PlanTrigger,
        candidates: Vec<crate::remediation::CandidateAction>,
        selected: usize,
        supersedes: Option<&str>,
    ) -> Result<String, EngineError> {
        let plan_id = Self::next_id("plan", self.store.plans.len());
        let approval = if candidates[selected].action.is_high_impact() {
            Approval::PendingOperator
        } else {
            Approval::AutoApproved
        };
        let plan = RemediationPlan {
            plan_id: plan_id.clone(),
            trigger,
            candidates,
            selected,
            approval,
            execution: Execution::NotStarted,
            proposed_at: self.clock,
        };
        let context = self.context();
        self.emit(Event::PlanProposed { plan, context, supersedes: supersedes.map(str::to_string) })?;
        if approval == Approval::PendingOperator && self.cfg.remediation.auto_approve {
            self.emit(Event::PlanApproved { plan_id: plan_id.clone(), by: Approver::Auto })?;
        }
        Ok(plan_id)
    }

    fn ready_plans(&self) -> Vec<String> {
        self.store
            .plans
            .values()
            .filter(|p| {
                matches!(p.approval, Approval::AutoApproved | Approval::Approved)
                    && p.execution == Execution::NotStarted
            })
            .map(|p| p.plan_id.clone())
            .collect()
    }

    fn run_ready_plans(&mut self) -> Result<(), EngineError> {
        for id in self.ready_plans() {
            self.execute(&id)?;
        }
        Ok(())
    }

    /// Executes the selected candidate. Returns false when the adapter is
    /// unavailable; the plan then stays approved and is retried next tick.
    fn execute(&mut self, plan_id: &str) -> Result<bool, EngineError> {
        let plan = self.store.plans[plan_id].clone();
        let Some(cand) = plan.current() else { return Ok(false) };
        let tick = self.clock;
        let receipt = match &cand.action {
            RemedialAction::Policy { action } => {
                self.adapter.apply_action(&mut self.sim, &action_id(plan_id), action, tick)
            }
            RemedialAction::RetryApply { policy_id } => match self.policy(policy_id).cloned() {
                Some(p) => self.adapter.apply(&mut self.sim, &p, 1.0, tick),
                None => EnforcementReceipt::failed(policy_id, tick, FailureCode::ApplyRejected, "unknown policy"),
            },
            RemedialAction::Rollback { policy_id } => {
                let r = rollback(policy_id, self.adapter.as_mut(), &mut self.sim, tick);
                if r.is_applied() {
                    self.forget_runtime(policy_id);
                }
                r
            }
        };
        if receipt.failure_code() == Some(FailureCode::AdapterUnavailable) {
            return Ok(false);
        }
        if receipt.is_applied() {
            if let RemedialAction::RetryApply { policy_id } | RemedialAction::Rollback { policy_id } = &cand.action {
                self.failures.remove(policy_id);
            }
        }
        let (risk_before, compliant_before) = match &plan.trigger {
            PlanTrigger::Verdict { risk, .. } => {
                (*risk, self.assessed.get(plan.intent_id()).is_none_or(|a| a.verdict.compliant))
            }
            PlanTrigger::EnforcementFailure { .. } => (1.0, false),
        };
        self.emit(Event::PlanExecuted {
            plan_id: plan_id.to_string(),
            action: cand.action.clone(),
            receipts: vec![receipt],
        })?;
        self.in_flight.insert(
            plan.intent_id().to_string(),
            InFlight { plan_id: plan_id.to_string(), executed_at: tick, risk_before, compliant_before },
        );
        Ok(true)
    }

    fn verify_plans(&mut self) -> Result<(), EngineError> {
        let settle = self.cfg.remediation.settle_window;
        let due: Vec<(String, InFlight)> = self
            .in_flight
            .iter()
            .filter(|(_, f)| self.clock >= f.executed_at + settle)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (intent_id, f) in due {
            self.in_flight.remove(&intent_id);
            let plan = self.store.plans[&f.plan_id].clone();
            let Some(cand) = plan.current() else { continue };
            let (risk_after, compliant_after, improved) = match &cand.action {
                RemedialAction::Policy { .. } => {
                    let (risk, compliant) =
                        self.assessed.get(&intent_id).map_or((0.0, true), |a| (a.verdict.risk, a.verdict.compliant));
                    let applied = matches!(&plan.execution, Execution::Executed { receipts } if receipts.iter().all(|r| r.is_applied()));
                    let improved = applied
                        && verified_improved(f.risk_before, risk, f.compliant_before, compliant, &self.cfg.remediation);
                    (risk, compliant, improved)
                }
                RemedialAction::RetryApply { policy_id } => {
                    let ok = matches!(
                        self.adapter.probe(&self.sim, policy_id, self.clock),
                        EnforcementState::ActiveConfirmed { .. }
                    );
                    (if ok { 0.0 } else { 1.0 }, ok, ok)
                }
                RemedialAction::Rollback { policy_id } => {
                    let ok = self.adapter.probe(&self.sim, policy_id, self.clock) == EnforcementState::Absent;
                    (if ok { 0.0 } else { 1.0 }, ok, ok)
                }
            };
            let rollback_receipt = match (&cand.action, improved) {
                (RemedialAction::Policy { .. }, false) => {
                    Some(rollback(&action_id(&f.plan_id), self.adapter.as_mut(), &mut self.sim, self.clock))
                }
                _ => None,
            };
            self.cooldown_until.insert(intent_id.clone(), f.executed_at + self.cfg.remediation.cooldown());
            self.emit(Event::PlanVerified {
                plan_id: f.plan_id,
                improved,
                risk_before: f.risk_before,
                risk_after,
                compliant_after,
                rollback: rollback_receipt,
            })?;
        }
        Ok(())
    }

    fn plan_for_verdicts(&mut self) -> Result<(), EngineError> {
        let triggers: Vec<PlanTrigger> = self
            .assessed
            .values()
            .map(|a| &a.verdict)
            .filter(|v| needs_plan(v))
            .filter(|v| !self.has_open_plan(&v.intent_id))
            .filter(|v| self.cooldown_until.get(&v.intent_id).is_none_or(|until| self.clock >= *until))
            .map(|v| PlanTrigger::Verdict {
                intent_id: v.intent_id.clone(),
                label: v.label,
                risk: v.risk,
                issued_at: v.issued_at,
            })
            .collect();
        for trigger in triggers {
            if let Some(plan_id) = self.propose(trigger, None)? {
                if self.ready_plans().contains(&plan_id) {
                    self.execute(&plan_id)?;
                }
            }
        }
        Ok(())
    }
}

/// Domain id under which a plan's corrective action is enforced.
pub fn action_id(plan_id: &str) -> String {
    format!("act-{plan_id}")
}

fn material_change(prev: &AssuranceVerdict, next: &AssuranceVerdict) -> bool {
    let top = |v: &AssuranceVerdict| v.attribution.first().map(|a| (a.resource.clone(), a.kpi));
    let crossing = |v: &AssuranceVerdict| v.lead_time_ticks.map(|l| v.issued_at + l);
    prev.label != next.label
        || prev.compliant != next.compliant
        || prev.root_cause_ref != next.root_cause_ref
        || (prev.risk - next.risk).abs() >= RISK_SHIFT
        || top(prev) != top(next)
        || match (crossing(prev), crossing(next)) {
            (Some(a), Some(b)) => a.abs_diff(b) >= LEAD_SHIFT,
            (None, None) => false,
            _ => true,
        }
}
