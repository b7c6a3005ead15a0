// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Scope;
use crate::canonical;
use crate::telemetry::KpiKey;

pub const SCHEMA_VERSION: &str = "1.0";
pub const DEFAULT_PRIORITY: u8 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentKind {
    LatencyBound,
    ThroughputFloor,
    AvailabilityFloor,
    UtilizationCap,
    AccessControl,
    BandwidthReservation,
}

impl IntentKind {
    pub const ALL: [IntentKind; 6] = [
        IntentKind::LatencyBound,
        IntentKind::ThroughputFloor,
        IntentKind::AvailabilityFloor,
        IntentKind::UtilizationCap,
        IntentKind::AccessControl,
        IntentKind::BandwidthReservation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentKind::LatencyBound => "LatencyBound",
            IntentKind::ThroughputFloor => "ThroughputFloor",
            IntentKind::AvailabilityFloor => "AvailabilityFloor",
            IntentKind::UtilizationCap => "UtilizationCap",
            IntentKind::AccessControl => "AccessControl",
            IntentKind::BandwidthReservation => "BandwidthReservation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Everything except access control carries KPI constraints.
    pub fn is_kpi_bearing(self) -> bool {
        self != IntentKind::AccessControl
    }

    /// KPIs a constraint of this kind may name.
    pub fn allowed_kpis(self) -> &'static [KpiKey] {
        match self {
            IntentKind::LatencyBound => &[KpiKey::ApiLatency],
            IntentKind::ThroughputFloor => &[KpiKey::SvcThroughput, KpiKey::AnalyticsThroughput],
            IntentKind::AvailabilityFloor => &[KpiKey::AvailabilityIdx],
            IntentKind::UtilizationCap => &[KpiKey::CpuUtil, KpiKey::RamUtil, KpiKey::StorageUtil],
            IntentKind::BandwidthReservation => &[KpiKey::SvcThroughput],
            IntentKind::AccessControl => &[],
        }
    }

    pub fn allows_action(self, action: ActionType) -> bool {
        use ActionType::*;
        match self {
            IntentKind::AccessControl => matches!(action, Allow | Deny),
            IntentKind::BandwidthReservation => {
                matches!(action, ReserveBandwidth | SetPriorityClass | Reroute)
            }
            IntentKind::UtilizationCap => {
                matches!(action, CapUtilization | Scale | Throttle | SetPriorityClass)
            }
            _ => !matches!(action, Allow | Deny | CapUtilization | ReserveBandwidth),
        }
    }
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentState {
    Submitted,
    Realized,
    Active,
    Degraded,
    Violated,
    Suspended,
    Withdrawn,
}

impl IntentState {
    pub fn can_transition_to(self, next: IntentState) -> bool {
        use IntentState::*;
        if next == Withdrawn {
            return self != Withdrawn;
        }
        matches!(
            (self, next),
            (Submitted, Realized)
                | (Realized, Active)
                | (Active, Degraded)
                | (Active, Violated)
                | (Active, Suspended)
                | (Degraded, Active)
        )
    }

    /// States in which an intent's policy is in force and assured.
    pub fn is_live(self) -> bool {
        matches!(self, IntentState::Active | IntentState::Degraded | IntentState::Violated)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntentError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: IntentState, to: IntentState },
    #[error("intent kind already fixed as {0}")]
    KindFixed(IntentKind),
}

/// A submitted goal. The kind becomes known once the text is translated and
/// is fixed from then on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub id: String,
    pub source_text: String,
    pub kind: Option<IntentKind>,
    pub state: IntentState,
    pub created_at: u64,
}

impl Intent {
    pub fn new(id: impl Into<String>, source_text: impl Into<String>, created_at: u64) -> Self {
        Self { id: id.into(), source_text: source_text.into(), kind: None, state: IntentState::Submitted, created_at }
    }

    pub fn transition(&mut self, next: IntentState) -> Result<(), IntentError> {
        if !self.state.can_transition_to(next) {
            return Err(IntentError::IllegalTransition { from: self.state, to: next });
        }
        self.state = next;
        Ok(())
    }

    pub fn fix_kind(&mut self, kind: IntentKind) -> Result<(), IntentError> {
        match self.kind {
            Some(k) if k != kind => Err(IntentError::KindFixed(k)),
            _ => {
                self.kind = Some(kind);
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "LEQ")]
    Leq,
    #[serde(rename = "GEQ")]
    Geq,
}

impl CmpOp {
    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Leq => "LEQ",
            CmpOp::Geq => "GEQ",
        }
    }

    /// Non-strict: the boundary value satisfies the constraint.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Leq => value <= threshold,
            CmpOp::Geq => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub kpi: KpiKey,
    pub op: CmpOp,
    pub value: f64,
    pub unit: String,
}

impl Constraint {
    pub fn new(kpi: KpiKey, op: CmpOp, value: f64) -> Self {
        Self { kpi, op, value, unit: kpi.unit().to_string() }
    }

    pub fn satisfied_by(&self, value: f64) -> bool {
        self.op.holds(value, self.value)
    }

    /// `self` is at least as tight as `other` (same KPI and operator).
    pub fn implies(&self, other: &Constraint) -> bool {
        self.kpi == other.kpi
            && self.op == other.op
            && match self.op {
                CmpOp::Leq => self.value <= other.value,
                CmpOp::Geq => self.value >= other.value,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionType {
    Allow,
    Deny,
    ReserveBandwidth,
    CapUtilization,
    SetPriorityClass,
    Scale,
    Reroute,
    Throttle,
}

impl ActionType {
    pub const ALL: [ActionType; 8] = [
        ActionType::Allow,
        ActionType::Deny,
        ActionType::ReserveBandwidth,
        ActionType::CapUtilization,
        ActionType::SetPriorityClass,
        ActionType::Scale,
        ActionType::Reroute,
        ActionType::Throttle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Allow => "Allow",
            ActionType::Deny => "Deny",
            ActionType::ReserveBandwidth => "ReserveBandwidth",
            ActionType::CapUtilization => "CapUtilization",
            ActionType::SetPriorityClass => "SetPriorityClass",
            ActionType::Scale => "Scale",
            ActionType::Reroute => "Reroute",
            ActionType::Throttle => "Throttle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.as_str() == s)
    }
}

/// A typed action; serialized as `{"type": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params")]
pub enum Action {
    Allow {
        from_segment: String,
        to_segment: String,
    },
    Deny {
        from_segment: String,
        to_segment: String,
    },
    ReserveBandwidth {
        mbps: f64,
        node_a: String,
        node_b: String,
        service: String,
    },
    CapUtilization {
        kpi: KpiKey,
        cap_percent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor_percent: Option<f64>,
    },
    SetPriorityClass {
        class: String,
    },
    Scale {
        service: String,
        steps: u32,
    },
    Reroute {
        service: String,
    },
    Throttle {
        service: String,
    },
}

impl Action {
    pub fn action_type(&self) -> ActionType {
        match self {
            Action::Allow { .. } => ActionType::Allow,
            Action::Deny { .. } => ActionType::Deny,
            Action::ReserveBandwidth { .. } => ActionType::ReserveBandwidth,
            Action::CapUtilization { .. } => ActionType::CapUtilization,
            Action::SetPriorityClass { .. } => ActionType::SetPriorityClass,
            Action::Scale { .. } => ActionType::Scale,
            Action::Reroute { .. } => ActionType::Reroute,
            Action::Throttle { .. } => ActionType::Throttle,
        }
    }

    /// The service an action targets, when it has one.
    pub fn target_service(&self) -> Option<&str> {
        match self {
            Action::ReserveBandwidth { service, .. }
            | Action::Scale { service, .. }
            | Action::Reroute { service }
            | Action::Throttle { service } => Some(service),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum ActivationMode {
    Immediate,
    Canary { fraction: f64 },
}

impl ActivationMode {
    pub fn strength(self) -> f64 {
        match self {
            ActivationMode::Immediate => 1.0,
            ActivationMode::Canary { fraction } => fraction,
        }
    }
}

/// A validated, controller-agnostic policy artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyIr {
    pub policy_id: String,
    pub intent_id: String,
    pub kind: IntentKind,
    pub scope: Scope,
    pub constraints: Vec<Constraint>,
    pub actions: Vec<Action>,
    pub priority: u8,
    pub activation_mode: ActivationMode,
    pub schema_version: String,
}

impl PolicyIr {
    pub fn to_document(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("policy serializes")
    }

    pub fn canonical_string(&self) -> String {
        canonical::canonical(self)
    }

    pub fn reservations(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.actions.iter().filter_map(|a| match a {
            Action::ReserveBandwidth { mbps, node_a, node_b, .. } => Some((node_a.as_str(), node_b.as_str(), *mbps)),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use IntentState::*;

    #[test]
    fn lifecycle_transitions() {
        let ok = [
            (Submitted, Realized),
            (Realized, Active),
            (Active, Degraded),
            (Degraded, Active),
            (Active, Violated),
            (Active, Suspended),
            (Violated, Withdrawn),
            (Submitted, Withdrawn),
        ];
        for (a, b) in ok {
            assert!(a.can_transition_to(b), "{a:?} -> {b:?}");
        }
        let bad = [
            (Submitted, Active),
            (Realized, Degraded),
            (Violated, Active),
            (Suspended, Active),
            (Withdrawn, Withdrawn),
            (Degraded, Violated),
        ];
        for (a, b) in bad {
            assert!(!a.can_transition_to(b), "{a:?} -> {b:?}");
        }
    }

    #[test]
    fn kind_is_set_once() {
        let mut i = Intent::new("i-1", "x", 0);
        i.fix_kind(IntentKind::LatencyBound).unwrap();
        i.fix_kind(IntentKind::LatencyBound).unwrap();
        assert_eq!(i.fix_kind(IntentKind::AccessControl), Err(IntentError::KindFixed(IntentKind::LatencyBound)));
    }

    #[test]
    fn constraint_implication_and_boundary() {
        let tight = Constraint::new(KpiKey::ApiLatency, CmpOp::Leq, 20.0);
        let loose = Constraint::new(KpiKey::ApiLatency, CmpOp::Leq, 50.0);
        assert!(tight.implies(&loose));
        assert!(!loose.implies(&tight));
        assert!(tight.satisfied_by(20.0));
        assert!(!tight.satisfied_by(20.000001));
        let floor = Constraint::new(KpiKey::AvailabilityIdx, CmpOp::Geq, 0.999);
        assert!(!floor.satisfied_by(0.985));
    }

    #[test]
    fn action_wire_form() {
        let a = Action::Deny { from_segment: "guest".into(), to_segment: "finance".into() };
        assert_eq!(
            canonical::canonical(&a),
            r#"{"params":{"from_segment":"guest","to_segment":"finance"},"type":"Deny"}"#
        );
    }
}
