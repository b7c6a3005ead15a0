// SPDX-License-Identifier: Apache-2.0

//! Assurance context, ranked corrective plans, and post-change verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::EnforcementReceipt;
use crate::assurance::{AssuranceVerdict, Baseline, DriftState, VerdictLabel};
use crate::config::RemediationConfig;
use crate::intent_model::{matched_services, Action, CmpOp, IntentState, PolicyIr, PolicyMetadata};
use crate::netsim::{SimState, Topology};
use crate::telemetry::{KpiKey, ResourceId, ResourceKind, SeriesKey};

/// Utilization at or above which a node or link counts as saturated.
pub const SATURATION_PERCENT: f64 = 90.0;
pub const MAX_SCALE_STEPS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySketch {
    pub nodes: usize,
    pub links: usize,
    pub services: usize,
    pub saturated: Vec<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub intent_id: String,
    pub state: IntentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalKpi {
    pub resource: ResourceId,
    pub kpi: KpiKey,
    pub d: f64,
}

/// Summary handed to the composer. Never carries raw series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceContext {
    pub topology_sketch: TopologySketch,
    pub intent_inventory: Vec<InventoryEntry>,
    pub critical_kpis: Vec<CriticalKpi>,
    pub verdicts: Vec<AssuranceVerdict>,
    pub enforcement_failures: Vec<EnforcementReceipt>,
    pub policy_context: Vec<PolicyIr>,
}

impl AssuranceContext {
    pub fn serialized_len(&self) -> usize {
        crate::canonical::canonical(self).len()
    }
}

pub struct ContextInputs<'a> {
    pub domain: &'a SimState,
    pub intents: Vec<(String, IntentState)>,
    pub drift: &'a BTreeMap<SeriesKey, DriftState>,
    pub verdicts: Vec<AssuranceVerdict>,
    pub enforcement_failures: Vec<EnforcementReceipt>,
    pub policies: Vec<PolicyIr>,
}

pub fn build_context(inputs: ContextInputs<'_>, cfg: &RemediationConfig) -> AssuranceContext {
    let topo = &inputs.domain.topology;
    let ev = inputs.domain.evaluate();
    let mut saturated: Vec<ResourceId> =
        ev.node_cpu.iter().filter(|(_, u)| **u >= SATURATION_PERCENT).map(|(n, _)| ResourceId::node(n)).collect();
    saturated.extend(
        ev.link_load
            .iter()
            .filter(|(_, (avail, used))| *avail <= 0.0 || 100.0 * used / avail >= SATURATION_PERCENT)
            .map(|(l, _)| l.clone()),
    );
    saturated.sort();

    let mut critical: Vec<CriticalKpi> = inputs
        .drift
        .iter()
        .filter(|(_, s)| s.flagged)
        .map(|((r, k), s)| CriticalKpi { resource: r.clone(), kpi: *k, d: s.d })
        .collect();
    critical.sort_by(|a, b| b.d.total_cmp(&a.d).then_with(|| (&a.resource, a.kpi).cmp(&(&b.resource, b.kpi))));
    critical.truncate(cfg.critical_kpis);

    let mut ctx = AssuranceContext {
        topology_sketch: TopologySketch {
            nodes: topo.nodes.len(),
            links: topo.links.len(),
            services: topo.services.len(),
            saturated,
        },
        intent_inventory: inputs
            .intents
            .into_iter()
            .map(|(intent_id, state)| InventoryEntry { intent_id, state })
            .collect(),
        critical_kpis: critical,
        verdicts: inputs.verdicts,
        enforcement_failures: inputs.enforcement_failures,
        policy_context: inputs.policies,
    };
    // Shed the least essential parts first until the bound holds.
    while ctx.serialized_len() > cfg.max_context_bytes {
        if ctx.critical_kpis.len() > 1 {
            ctx.critical_kpis.pop();
        } else if ctx.intent_inventory.len() > 1 {
            ctx.intent_inventory.pop();
        } else if ctx.policy_context.len() > 1 {
            ctx.policy_context.pop();
        } else if ctx.verdicts.len() > 1 {
            ctx.verdicts.pop();
        } else if ctx.enforcement_failures.len() > 1 {
            ctx.enforcement_failures.pop();
        } else {
            break;
        }
    }
    ctx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RemedialAction {
    Policy { action: Action },
    RetryApply { policy_id: String },
    Rollback { policy_id: String },
}

impl RemedialAction {
    /// Changes that always need an explicit approval.
    pub fn is_high_impact(&self) -> bool {
        match self {
            RemedialAction::Policy { action: Action::Reroute { .. } } => true,
            RemedialAction::Policy { action: Action::Scale { steps, .. } } => *steps > 1,
            RemedialAction::Rollback { .. } => true,
            _ => false,
        }
    }

    pub fn risk(&self, cfg: &RemediationConfig) -> f64 {
        let t = &cfg.action_risk;
        match self {
            RemedialAction::Policy { action } => match action {
                Action::Throttle { .. } => t.throttle,
                Action::Scale { .. } => t.scale,
                Action::Reroute { .. } => t.reroute,
                Action::ReserveBandwidth { .. } => t.reserve_bandwidth,
                _ => t.suspend,
            },
            RemedialAction::RetryApply { .. } => t.retry_apply,
            RemedialAction::Rollback { .. } => t.suspend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action: RemedialAction,
    pub target: String,
    pub expected_impact: f64,
    pub action_risk: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PlanTrigger {
    Verdict { intent_id: String, label: VerdictLabel, risk: f64, issued_at: u64 },
    EnforcementFailure { intent_id: String, receipt: EnforcementReceipt },
}

impl PlanTrigger {
    pub fn intent_id(&self) -> &str {
        match self {
            PlanTrigger::Verdict { intent_id, .. } | PlanTrigger::EnforcementFailure { intent_id, .. } => intent_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approval {
    AutoApproved,
    PendingOperator,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum Execution {
    NotStarted,
    Executed { receipts: Vec<EnforcementReceipt> },
    VerifiedImproved,
    RolledBack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemediationPlan {
    pub plan_id: String,
    pub trigger: PlanTrigger,
    pub candidates: Vec<CandidateAction>,
    /// Index of the candidate currently on offer.
    pub selected: usize,
    pub approval: Approval,
    pub execution: Execution,
    pub proposed_at: u64,
}

impl RemediationPlan {
    pub fn current(&self) -> Option<&CandidateAction> {
        self.candidates.get(self.selected)
    }

    pub fn intent_id(&self) -> &str {
        self.trigger.intent_id()
    }

    pub fn is_open(&self) -> bool {
        !matches!(self.execution, Execution::VerifiedImproved | Execution::RolledBack)
            && self.approval != Approval::Rejected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("no remediation template applies to {0}")]
pub struct NoApplicableTemplate(pub String);

/// Proposes unscored actions; ranking is always recomputed locally.
pub trait Composer {
    fn propose(
        &self,
        ctx: &AssuranceContext,
        trigger: &PlanTrigger,
        topo: &Topology,
    ) -> Result<Vec<(RemedialAction, String)>, NoApplicableTemplate>;
}

/// Template table keyed on the KPI of the top attribution.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleComposer;

impl Composer for RuleComposer {
    fn propose(
        &self,
        ctx: &AssuranceContext,
        trigger: &PlanTrigger,
        topo: &Topology,
    ) -> Result<Vec<(RemedialAction, String)>, NoApplicableTemplate> {
        let (intent_id, receipt) = match trigger {
            PlanTrigger::EnforcementFailure { intent_id, receipt } => (intent_id, Some(receipt)),
            PlanTrigger::Verdict { intent_id, .. } => (intent_id, None),
        };
        if let Some(r) = receipt {
            let id = r.policy_id.clone();
            return Ok(vec![
                (RemedialAction::RetryApply { policy_id: id.clone() }, id.clone()),
                (RemedialAction::Rollback { policy_id: id.clone() }, id),
            ]);
        }
        let none = || NoApplicableTemplate(intent_id.clone());
        let verdict = ctx.verdicts.iter().find(|v| &v.intent_id == intent_id).ok_or_else(none)?;
        let policy = ctx.policy_context.iter().find(|p| &p.intent_id == intent_id).ok_or_else(none)?;
        let top = verdict.attribution.first();
        let kpi = top.map(|a| a.kpi).or_else(|| policy.constraints.first().map(|c| c.kpi)).ok_or_else(none)?;
        let service = top
            .filter(|a| a.resource.kind() == ResourceKind::Service)
            .map(|a| a.resource.name().to_string())
            .or_else(|| matched_services(policy, topo).first().map(|s| s.name.clone()))
            .ok_or_else(none)?;
        let p = |action: Action| (RemedialAction::Policy { action }, service.clone());
        let out = match kpi {
            KpiKey::SvcThroughput => {
                let mut v = vec![p(Action::Reroute { service: service.clone() })];
                if let Some(s) = topo.service(&service) {
                    if let Some(dest) = s.egress.clone().filter(|e| *e != s.node) {
                        v.push(p(Action::ReserveBandwidth {
                            mbps: s.traffic_demand_mbps,
                            node_a: s.node.clone(),
                            node_b: dest,
                            service: service.clone(),
                        }));
                    }
                }
                v
            }
            KpiKey::RamUtil | KpiKey::StorageUtil => vec![
                p(Action::Scale { service: service.clone(), steps: 1 }),
                p(Action::Throttle { service: service.clone() }),
            ],
            _ => vec![
                p(Action::Scale { service: service.clone(), steps: 1 }),
                p(Action::Throttle { service: service.clone() }),
                p(Action::Reroute { service: service.clone() }),
            ],
        };
        Ok(out)
    }
}

/// Predicted move toward compliance if `action` were enforced now, averaged
/// over the policy's constraint series and normalized by how far each has
/// drifted from its baseline. Evaluated noise-free on a copy of the domain.
pub fn predicted_impact(
    domain: &SimState,
    policy: &PolicyIr,
    meta: &PolicyMetadata,
    baselines: &BTreeMap<SeriesKey, Baseline>,
    action: &Action,
) -> f64 {
    let mut what_if = domain.clone();
    if what_if.apply_action("__what_if", action, 1.0).is_err() {
        return 0.0;
    }
    let (before, after) = (domain.evaluate(), what_if.evaluate());
    let mut parts = Vec::new();
    for c in &policy.constraints {
        let dir = match c.op {
            CmpOp::Leq => 1.0,
            CmpOp::Geq => -1.0,
        };
        for key in meta.bound_kpis.iter().filter(|(_, k)| *k == c.kpi) {
            let (Some(v0), Some(v1)) = (before.value(&key.0, key.1), after.value(&key.0, key.1)) else {
                continue;
            };
            let mu = baselines.get(key).map_or(v0, |b| b.mu);
            let norm = ((v0 - mu) * dir).max(0.05 * mu.abs()).max(1e-9);
            parts.push(((v0 - v1) * dir / norm).clamp(0.0, 1.0));
        }
    }
    if parts.is_empty() {
        0.0
    } else {
        parts.iter().sum::<f64>() / parts.len() as f64
    }
}

/// Fixed impacts for the enforcement-failure template: retrying restores the
/// intended state, rolling back only makes it consistent.
pub const RETRY_IMPACT: f64 = 1.0;
pub const ROLLBACK_IMPACT: f64 = 0.5;

/// Scores and ranks proposals. `impact` evaluates a policy action; Scale
/// proposals are sized to the fewest steps that fully recover the drift.
pub fn compose_plan(
    ctx: &AssuranceContext,
    trigger: &PlanTrigger,
    topo: &Topology,
    composer: &dyn Composer,
    impact: &mut dyn FnMut(&Action) -> f64,
    cfg: &RemediationConfig,
) -> Result<Vec<CandidateAction>, NoApplicableTemplate> {
    let proposals = composer.propose(ctx, trigger, topo)?;
    if proposals.is_empty() {
        return Err(NoApplicableTemplate(trigger.intent_id().to_string()));
    }
    let mut out: Vec<CandidateAction> = proposals
        .into_iter()
        .map(|(action, target)| {
            let (action, expected_impact) = match action {
                RemedialAction::Policy { action: Action::Scale { service, .. } } => {
                    let (steps, i) = size_scale(&service, impact);
                    (RemedialAction::Policy { action: Action::Scale { service, steps } }, i)
                }
                RemedialAction::Policy { action } => {
                    let i = impact(&action);
                    (RemedialAction::Policy { action }, i)
                }
                a @ RemedialAction::RetryApply { .. } => (a, RETRY_IMPACT),
                a @ RemedialAction::Rollback { .. } => (a, ROLLBACK_IMPACT),
            };
            let action_risk = action.risk(cfg);
            CandidateAction {
                score: expected_impact - cfg.lambda * action_risk,
                action,
                target,
                expected_impact,
                action_risk,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

fn size_scale(service: &str, impact: &mut dyn FnMut(&Action) -> f64) -> (u32, f64) {
    let mut best = (1, 0.0);
    for steps in 1..=MAX_SCALE_STEPS {
        let i = impact(&Action::Scale { service: service.to_string(), steps });
        if i > best.1 + 1e-12 {
            best = (steps, i);
        }
        if i >= 1.0 - 1e-9 {
            break;
        }
    }
    best
}

/// Post-change check: improved when risk fell by at least the threshold or
/// a breach was cleared.
pub fn verified_improved(
    risk_before: f64,
    risk_after: f64,
    compliant_before: bool,
    compliant_after: bool,
    cfg: &RemediationConfig,
) -> bool {
    risk_before - risk_after >= cfg.improvement_threshold - 1e-12 || (!compliant_before && compliant_after)
}

/// Labels that warrant a plan. Victims are left to their root cause.
pub fn needs_plan(v: &AssuranceVerdict) -> bool {
    matches!(v.label, VerdictLabel::AtRisk | VerdictLabel::RootCause | VerdictLabel::Violated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assurance::Attribution;
    use crate::config::ActionRiskTable;
    use crate::intent_model::extract_metadata;
    use crate::netsim::{topology::fixtures, FaultKind, FaultScenario};
    use crate::realization::grammar_translate;

    fn policy(text: &str) -> PolicyIr {
        let mut doc = grammar_translate(text).unwrap();
        doc["policy_id"] = "pol-i1".into();
        doc["intent_id"] = "i1".into();
        crate::intent_model::validate_policy_ir(&doc).unwrap()
    }

    fn verdict(kpi: KpiKey, resource: ResourceId) -> AssuranceVerdict {
        AssuranceVerdict {
            intent_id: "i1".into(),
            risk: 0.8,
            label: VerdictLabel::RootCause,
            attribution: vec![Attribution { resource, kpi, contribution: 1.0 }],
            lead_time_ticks: Some(20),
            horizon: 60,
            issued_at: 300,
            root_cause_ref: None,
            compliant: true,
        }
    }

    fn ctx(v: Vec<AssuranceVerdict>, p: Vec<PolicyIr>) -> AssuranceContext {
        AssuranceContext {
            topology_sketch: TopologySketch { nodes: 3, links: 3, services: 3, saturated: vec![] },
            intent_inventory: vec![],
            critical_kpis: vec![],
            verdicts: v,
            enforcement_failures: vec![],
            policy_context: p,
        }
    }

    fn trigger() -> PlanTrigger {
        PlanTrigger::Verdict { intent_id: "i1".into(), label: VerdictLabel::RootCause, risk: 0.8, issued_at: 300 }
    }

    #[test]
    fn equal_impact_ranks_by_risk_table() {
        let p = policy("guarantee latency below 30 ms for service checkout");
        let c = ctx(vec![verdict(KpiKey::CpuUtil, ResourceId::service("checkout"))], vec![p]);
        let cfg = RemediationConfig::default();
        let mut flat = |_: &Action| 0.8;
        let plan = compose_plan(&c, &trigger(), &fixtures::triangle(), &RuleComposer, &mut flat, &cfg).unwrap();
        let t = ActionRiskTable::default();
        let got: Vec<(&str, f64)> = plan
            .iter()
            .map(|c| match &c.action {
                RemedialAction::Policy { action } => (action.action_type().as_str(), c.score),
                _ => ("other", c.score),
            })
            .collect();
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), ["Throttle", "Scale", "Reroute"]);
        for ((_, score), risk) in got.iter().zip([t.throttle, t.scale, t.reroute]) {
            assert!((score - (0.8 - 0.5 * risk)).abs() < 1e-12);
        }
    }

    #[test]
    fn enforcement_failure_template() {
        let r = EnforcementReceipt::failed("pol-i1", 5, crate::activation::FailureCode::ApplyRejected, "x");
        let t = PlanTrigger::EnforcementFailure { intent_id: "i1".into(), receipt: r };
        let mut never = |_: &Action| -> f64 { unreachable!() };
        let plan = compose_plan(
            &ctx(vec![], vec![]),
            &t,
            &fixtures::triangle(),
            &RuleComposer,
            &mut never,
            &RemediationConfig::default(),
        )
        .unwrap();
        assert!(matches!(plan[0].action, RemedialAction::RetryApply { .. }));
        assert!(matches!(plan[1].action, RemedialAction::Rollback { .. }));
    }

    #[test]
    fn what_if_impact_orders_cpu_actions() {
        let topo = fixtures::triangle();
        let mut sim = SimState::new(topo.clone(), 1, false).unwrap();
        sim.inject_fault(FaultScenario {
            scenario_id: "f".into(),
            kind: FaultKind::NodeCpuSaturation,
            target: ResourceId::service("checkout"),
            onset_tick: 0,
            ramp: 0.01,
            magnitude_cap: 0.3,
        })
        .unwrap();
        sim.tick = 20;
        let p = policy("guarantee latency below 30 ms for service checkout");
        let meta = extract_metadata(&p, &topo).unwrap();
        let clean = SimState::new(topo.clone(), 1, false).unwrap().evaluate();
        let baselines: BTreeMap<SeriesKey, Baseline> = meta
            .bound_kpis
            .iter()
            .filter_map(|k| clean.value(&k.0, k.1).map(|mu| (k.clone(), Baseline { mu, sigma: 1.0, calibrated_at: 0 })))
            .collect();
        let cfg = RemediationConfig::default();
        let c = ctx(vec![verdict(KpiKey::CpuUtil, ResourceId::service("checkout"))], vec![p.clone()]);
        let mut impact = |a: &Action| predicted_impact(&sim, &p, &meta, &baselines, a);
        let plan = compose_plan(&c, &trigger(), &topo, &RuleComposer, &mut impact, &cfg).unwrap();
        assert!(matches!(plan[0].action, RemedialAction::Policy { action: Action::Scale { .. } }));
        assert!(plan[0].expected_impact > 0.99, "{plan:?}");
        assert_eq!(plan[1].expected_impact, 0.0);
        assert!(matches!(plan[1].action, RemedialAction::Policy { action: Action::Throttle { .. } }));
        assert!(matches!(plan[2].action, RemedialAction::Policy { action: Action::Reroute { .. } }));
        for w in plan.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn high_impact_classes() {
        let s = |steps| RemedialAction::Policy { action: Action::Scale { service: "a".into(), steps } };
        assert!(!s(1).is_high_impact());
        assert!(s(2).is_high_impact());
        assert!(RemedialAction::Policy { action: Action::Reroute { service: "a".into() } }.is_high_impact());
        assert!(RemedialAction::Rollback { policy_id: "p".into() }.is_high_impact());
        assert!(!RemedialAction::Policy { action: Action::Throttle { service: "a".into() } }.is_high_impact());
    }

    #[test]
    fn verification_rule() {
        let cfg = RemediationConfig::default();
        assert!(verified_improved(0.8, 0.7, true, true, &cfg));
        assert!(!verified_improved(0.8, 0.75, true, true, &cfg));
        assert!(verified_improved(1.0, 1.0, false, true, &cfg));
        assert!(!verified_improved(0.0, 0.0, true, true, &cfg));
    }
}
