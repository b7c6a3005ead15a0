// SPDX-License-Identifier: Apache-2.0

//! Event records and the append-only JSONL log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activation::EnforcementReceipt;
use crate::assurance::{AssuranceVerdict, Breach};
use crate::conflict::{ConflictReport, Decision, ResolutionOutcome};
use crate::intent_model::{PolicyIr, ScopeResolvesEmpty};
use crate::realization::{AttemptRecord, RealizationFailure};
use crate::remediation::{AssuranceContext, RemedialAction, RemediationPlan};
use crate::telemetry::{KpiKey, ResourceId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum FailureReason {
    Translation { failure: RealizationFailure },
    ScopeResolvesEmpty { detail: ScopeResolvesEmpty },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    Apply,
    Probe,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EscalationSubject {
    Conflict { policy_id: String, intent_id: String, reports: Vec<ConflictReport>, outcome: ResolutionOutcome },
    Plan { plan_id: String, intent_id: String },
    NoTemplate { intent_id: String, detail: String },
    Removal { policy_id: String, intent_id: String },
}

impl EscalationSubject {
    pub fn intent_id(&self) -> &str {
        match self {
            EscalationSubject::Conflict { intent_id, .. }
            | EscalationSubject::Plan { intent_id, .. }
            | EscalationSubject::NoTemplate { intent_id, .. }
            | EscalationSubject::Removal { intent_id, .. } => intent_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approver {
    Operator,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    IntentSubmitted {
        intent_id: String,
        source_text: String,
    },
    IntentRealized {
        intent_id: String,
        policy: PolicyIr,
        translator_id: String,
        attempts: Vec<AttemptRecord>,
    },
    RealizationFailed {
        intent_id: String,
        reason: FailureReason,
    },
    ConflictDetected {
        policy_id: String,
        reports: Vec<ConflictReport>,
    },
    /// Closes an escalation when `escalation_id` is set. Policies listed in
    /// `suspended` were removed from the domain before this was recorded.
    ConflictResolved {
        policy_id: Option<String>,
        outcome: ResolutionOutcome,
        escalation_id: Option<String>,
        suspended: Vec<EnforcementReceipt>,
    },
    Escalated {
        escalation_id: String,
        subject: EscalationSubject,
    },
    PolicyApplied {
        policy_id: String,
        intent_id: String,
        strength: f64,
        decision: Decision,
        receipt: EnforcementReceipt,
    },
    EnforcementFailed {
        policy_id: String,
        intent_id: String,
        operation: Operation,
        receipt: EnforcementReceipt,
    },
    DriftFlagged {
        resource: ResourceId,
        kpi: KpiKey,
        onset_tick: u64,
        d: f64,
        score: f64,
    },
    VerdictIssued {
        verdict: AssuranceVerdict,
    },
    Violation {
        intent_id: String,
        breaches: Vec<Breach>,
    },
    /// A plan replacing `supersedes` closes the superseded plan as rejected.
    PlanProposed {
        plan: RemediationPlan,
        context: AssuranceContext,
        supersedes: Option<String>,
    },
    PlanApproved {
        plan_id: String,
        by: Approver,
    },
    PlanExecuted {
        plan_id: String,
        action: RemedialAction,
        receipts: Vec<EnforcementReceipt>,
    },
    PlanVerified {
        plan_id: String,
        improved: bool,
        risk_before: f64,
        risk_after: f64,
        compliant_after: bool,
        rollback: Option<EnforcementReceipt>,
    },
    CanaryPromoted {
        policy_id: String,
        receipt: EnforcementReceipt,
    },
    CanaryRolledBack {
        policy_id: String,
        intent_id: String,
        reason: String,
        receipt: EnforcementReceipt,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::IntentSubmitted { .. } => "IntentSubmitted",
            Event::IntentRealized { .. } => "IntentRealized",
            Event::RealizationFailed { .. } => "RealizationFailed",
            Event::ConflictDetected { .. } => "ConflictDetected",
            Event::ConflictResolved { .. } => "ConflictResolved",
            Event::Escalated { .. } => "Escalated",
            Event::PolicyApplied { .. } => "PolicyApplied",
            Event::EnforcementFailed { .. } => "EnforcementFailed",
            Event::DriftFlagged { .. } => "DriftFlagged",
            Event::VerdictIssued { .. } => "VerdictIssued",
            Event::Violation { .. } => "Violation",
            Event::PlanProposed { .. } => "PlanProposed",
            Event::PlanApproved { .. } => "PlanApproved",
            Event::PlanExecuted { .. } => "PlanExecuted",
            Event::PlanVerified { .. } => "PlanVerified",
            Event::CanaryPromoted { .. } => "CanaryPromoted",
            Event::CanaryRolledBack { .. } => "CanaryRolledBack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        crate::canonical::canonical(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("event log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
    #[error("event log line {line}: expected seq {expected}, found {found}")]
    Gap { line: usize, expected: u64, found: u64 },
}

/// Append-only log. Sequence numbers start at 1 and have no gaps; every
/// appended line is flushed before `append` returns.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
    sink: Option<File>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a log file for appending, creating it if absent.
    pub fn open(path: &Path, existing: Vec<EventRecord>) -> Result<Self, LogError> {
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { records: existing, sink: Some(sink) })
    }

    pub fn head(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq)
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Records with `seq > from`.
    pub fn since(&self, from: u64) -> &[EventRecord] {
        let start = self.records.partition_point(|r| r.seq <= from);
        &self.records[start..]
    }

    pub fn append(&mut self, tick: u64, event: Event) -> Result<&EventRecord, LogError> {
        let rec = EventRecord { seq: self.head() + 1, tick, event };
        if let Some(f) = &mut self.sink {
            let mut line = rec.to_line();
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }
}

/// Reads a log file. A final line without its newline is a write torn by a
/// crash and is dropped; `torn` reports whether that happened.
pub fn read_log(path: &Path) -> Result<(Vec<EventRecord>, bool), LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out: Vec<EventRecord> = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            return Ok((out, false));
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            return Ok((out, true));
        }
        let rec: EventRecord =
            serde_json::from_str(buf.trim_end()).map_err(|source| LogError::Decode { line: line_no, source })?;
        let expected = out.last().map_or(1, |r| r.seq + 1);
        if rec.seq != expected {
            return Err(LogError::Gap { line: line_no, expected, found: rec.seq });
        }
        out.push(rec);
    }
}

/// Rewrites `path` to hold exactly `records`.
pub fn truncate_log(path: &Path, records: &[EventRecord]) -> Result<(), LogError> {
    let mut f = File::create(path)?;
    for r in records {
        writeln!(f, "{}", r.to_line())?;
    }
    f.flush()?;
    Ok(())
}
