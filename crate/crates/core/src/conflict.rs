// SPDX-License-Identifier: Apache-2.0

//! Pairwise conflict classification, reservation feasibility and the
//! resolution decision table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent_model::{Action, CmpOp, Constraint, PolicyIr, PolicyMetadata, ScopeTuple};
use crate::netsim::Topology;
use crate::telemetry::{KpiKey, ResourceId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    Contradiction,
    Shadowing,
    Redundancy,
    ResourceInfeasibility,
}

impl ConflictKind {
    pub fn severity(self) -> Severity {
        match self {
            ConflictKind::Contradiction | ConflictKind::ResourceInfeasibility => Severity::Blocking,
            ConflictKind::Shadowing | ConflictKind::Redundancy => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Blocking,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Witness {
    /// A point matched by both scopes; `*` marks a dimension both leave open.
    Tuple {
        tuple: ScopeTuple,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to_segment: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kpi: Option<KpiKey>,
    },
    Resource {
        resource: ResourceId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub kind: ConflictKind,
    pub candidate_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub existing_id: Option<String>,
    pub witness: Witness,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConflictError {
    #[error("metadata built against topology versions {0} and {1}")]
    TopologyMismatch(u64, u64),
    #[error("no path between `{0}` and `{1}`")]
    UnknownLink(String, String),
}

fn report(kind: ConflictKind, a: &PolicyIr, b: Option<&PolicyIr>, witness: Witness) -> ConflictReport {
    ConflictReport {
        kind,
        candidate_id: a.policy_id.clone(),
        existing_id: b.map(|p| p.policy_id.clone()),
        witness,
        severity: kind.severity(),
    }
}

fn access_rules(p: &PolicyIr) -> impl Iterator<Item = (bool, &str, &str)> {
    p.actions.iter().filter_map(|a| match a {
        Action::Allow { from_segment, to_segment } => Some((true, from_segment.as_str(), to_segment.as_str())),
        Action::Deny { from_segment, to_segment } => Some((false, from_segment.as_str(), to_segment.as_str())),
        _ => None,
    })
}

fn caps(p: &PolicyIr) -> impl Iterator<Item = (KpiKey, f64, Option<f64>)> + '_ {
    p.actions.iter().filter_map(|a| match a {
        Action::CapUtilization { kpi, cap_percent, floor_percent } => Some((*kpi, *cap_percent, *floor_percent)),
        _ => None,
    })
}

/// True iff some value satisfies both constraints (same KPI assumed).
fn compatible(a: &Constraint, b: &Constraint) -> bool {
    match (a.op, b.op) {
        (CmpOp::Leq, CmpOp::Geq) => b.value <= a.value,
        (CmpOp::Geq, CmpOp::Leq) => a.value <= b.value,
        _ => true,
    }
}

/// Every constraint of `weaker` is implied by some constraint of `stronger`.
pub fn constraints_imply(stronger: &[Constraint], weaker: &[Constraint]) -> bool {
    weaker.iter().all(|w| stronger.iter().any(|s| s.implies(w)))
}

fn sorted_canonical<T: Serialize>(items: &[T]) -> Vec<String> {
    let mut v: Vec<String> = items.iter().map(crate::canonical::canonical).collect();
    v.sort();
    v
}

fn same_actions(a: &PolicyIr, b: &PolicyIr) -> bool {
    sorted_canonical(&a.actions) == sorted_canonical(&b.actions)
}

fn equivalent(a: &PolicyIr, b: &PolicyIr) -> bool {
    same_actions(a, b) && sorted_canonical(&a.constraints) == sorted_canonical(&b.constraints)
}

/// Classifies candidate `a` against existing `b`.
pub fn classify_pair(
    a: (&PolicyIr, &PolicyMetadata),
    b: (&PolicyIr, &PolicyMetadata),
) -> Result<Vec<ConflictReport>, ConflictError> {
    let ((pa, ma), (pb, mb)) = (a, b);
    if ma.topology_version != mb.topology_version {
        return Err(ConflictError::TopologyMismatch(ma.topology_version, mb.topology_version));
    }
    Ok(classify_policies(pa, pb))
}

/// Topology-independent part of [`classify_pair`].
pub fn classify_policies(pa: &PolicyIr, pb: &PolicyIr) -> Vec<ConflictReport> {
    let mut out = Vec::new();
    let Some(overlap) = pa.scope.intersect(&pb.scope) else {
        return out;
    };
    let point = overlap.representative();

    let contradiction = access_contradiction(pa, pb, &point)
        .or_else(|| constraint_contradiction(pa, pb, &point))
        .or_else(|| cap_contradiction(pa, pb, &point));
    if let Some(w) = contradiction {
        out.push(report(ConflictKind::Contradiction, pa, Some(pb), w));
    }

    if pa.kind == pb.kind && pa.priority != pb.priority {
        let (hi, lo) = if pa.priority > pb.priority { (pa, pb) } else { (pb, pa) };
        if hi.scope.subsumes(&lo.scope) && !equivalent(hi, lo) {
            let w = Witness::Tuple { tuple: lo.scope.representative(), to_segment: None, kpi: None };
            out.push(report(ConflictKind::Shadowing, pa, Some(pb), w));
        }
    }

    if pa.kind == pb.kind
        && same_actions(pa, pb)
        && (constraints_imply(&pa.constraints, &pb.constraints) || constraints_imply(&pb.constraints, &pa.constraints))
    {
        let w = Witness::Tuple { tuple: point, to_segment: None, kpi: None };
        out.push(report(ConflictKind::Redundancy, pa, Some(pb), w));
    }
    out
}

fn access_contradiction(pa: &PolicyIr, pb: &PolicyIr, point: &ScopeTuple) -> Option<Witness> {
    for (allow_a, from_a, to_a) in access_rules(pa) {
        for (allow_b, from_b, to_b) in access_rules(pb) {
            if allow_a != allow_b && from_a == from_b && to_a == to_b {
                let mut tuple = point.clone();
                tuple.segment = from_a.to_string();
                return Some(Witness::Tuple { tuple, to_segment: Some(to_a.to_string()), kpi: None });
            }
        }
    }
    None
}

fn constraint_contradiction(pa: &PolicyIr, pb: &PolicyIr, point: &ScopeTuple) -> Option<Witness> {
    for ca in &pa.constraints {
        for cb in pb.constraints.iter().filter(|c| c.kpi == ca.kpi) {
            if !compatible(ca, cb) {
                return Some(Witness::Tuple { tuple: point.clone(), to_segment: None, kpi: Some(ca.kpi) });
            }
        }
    }
    None
}

fn cap_contradiction(pa: &PolicyIr, pb: &PolicyIr, point: &ScopeTuple) -> Option<Witness> {
    for (ka, cap_a, floor_a) in caps(pa) {
        for (_, cap_b, floor_b) in caps(pb).filter(|c| c.0 == ka) {
            let floor = floor_a.unwrap_or(f64::NEG_INFINITY).max(floor_b.unwrap_or(f64::NEG_INFINITY));
            if cap_a.min(cap_b) < floor {
                return Some(Witness::Tuple { tuple: point.clone(), to_segment: None, kpi: Some(ka) });
            }
        }
    }
    None
}

/// Reserved mbps per link across a set of policies.
pub fn link_reservations<'a>(
    policies: impl IntoIterator<Item = &'a PolicyIr>,
    topo: &Topology,
) -> BTreeMap<ResourceId, f64> {
    let mut out = BTreeMap::new();
    for p in policies {
        for (a, b, mbps) in p.reservations() {
            if let Some(path) = topo.shortest_path(a, b) {
                for l in Topology::path_links(&path) {
                    *out.entry(l).or_insert(0.0) += mbps;
                }
            }
        }
    }
    out
}

pub fn check_feasibility<'a>(
    candidate: &PolicyIr,
    active: impl IntoIterator<Item = &'a PolicyIr>,
    topo: &Topology,
) -> Result<Vec<ConflictReport>, ConflictError> {
    if candidate.kind != crate::intent_model::IntentKind::BandwidthReservation {
        return Ok(Vec::new());
    }
    let mut wanted: BTreeMap<ResourceId, f64> = BTreeMap::new();
    for (a, b, mbps) in candidate.reservations() {
        let path = topo
            .shortest_path(a, b)
            .filter(|p| p.len() > 1)
            .ok_or_else(|| ConflictError::UnknownLink(a.to_string(), b.to_string()))?;
        for l in Topology::path_links(&path) {
            *wanted.entry(l).or_insert(0.0) += mbps;
        }
    }
    let existing = link_reservations(active.into_iter().filter(|p| p.policy_id != candidate.policy_id), topo);
    let mut out = Vec::new();
    for (link, mbps) in wanted {
        let capacity = topo.links.iter().find(|l| l.id() == link).map(|l| l.capacity_mbps).unwrap_or(0.0);
        if existing.get(&link).copied().unwrap_or(0.0) + mbps > capacity {
            out.push(report(
                ConflictKind::ResourceInfeasibility,
                candidate,
                None,
                Witness::Resource { resource: link },
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision")]
pub enum Decision {
    ActivateCandidate,
    RejectCandidate,
    SuspendExisting { policy_ids: Vec<String> },
    Escalate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RationaleCode {
    NoBlockingConflict,
    CandidateOutranks,
    CandidateOutranked,
    EqualPriority,
    Infeasible,
    OperatorDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    #[serde(flatten)]
    pub decision: Decision,
    pub rationale: RationaleCode,
    pub detail: String,
    pub warnings: Vec<ConflictReport>,
}

/// Decision table: no blocking conflict activates; infeasibility escalates;
/// otherwise a candidate outranked by any contradicting policy is rejected, a
/// tie escalates, and a candidate outranking all of them suspends them.
pub fn resolve(
    reports: &[ConflictReport],
    candidate: &PolicyIr,
    existing: &BTreeMap<String, PolicyIr>,
) -> ResolutionOutcome {
    let warnings: Vec<ConflictReport> = reports.iter().filter(|r| r.severity == Severity::Warning).cloned().collect();
    let outcome = |decision, rationale, detail: String| ResolutionOutcome {
        decision,
        rationale,
        detail,
        warnings: warnings.clone(),
    };
    if reports.iter().all(|r| r.severity == Severity::Warning) {
        return outcome(Decision::ActivateCandidate, RationaleCode::NoBlockingConflict, "no blocking conflict".into());
    }
    if let Some(r) = reports.iter().find(|r| r.kind == ConflictKind::ResourceInfeasibility) {
        return outcome(
            Decision::Escalate,
            RationaleCode::Infeasible,
            format!("reservation exceeds capacity: {:?}", r.witness),
        );
    }
    let mut losers: Vec<String> = Vec::new();
    let mut tie = None;
    for r in reports.iter().filter(|r| r.kind == ConflictKind::Contradiction) {
        let Some(id) = &r.existing_id else { continue };
        let prio = existing.get(id).map_or(candidate.priority, |p| p.priority);
        if prio > candidate.priority {
            return outcome(
                Decision::RejectCandidate,
                RationaleCode::CandidateOutranked,
                format!("`{id}` has priority {prio} > {}", candidate.priority),
            );
        }
        if prio == candidate.priority {
            tie.get_or_insert_with(|| id.clone());
        } else if !losers.contains(id) {
            losers.push(id.clone());
        }
    }
    if let Some(id) = tie {
        return outcome(
            Decision::Escalate,
            RationaleCode::EqualPriority,
            format!("`{id}` has equal priority {}", candidate.priority),
        );
    }
    losers.sort();
    let detail = format!("candidate priority {} outranks {}", candidate.priority, losers.join(", "));
    outcome(Decision::SuspendExisting { policy_ids: losers }, RationaleCode::CandidateOutranks, detail)
}
