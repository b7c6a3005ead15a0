// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::{Action, PolicyIr};
use super::scope::Selector;
use crate::netsim::topology::{Service, Topology};
use crate::telemetry::{KpiKey, ResourceId, ResourceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetadata {
    pub scope_fingerprint: String,
    pub bound_resources: BTreeSet<ResourceId>,
    pub bound_kpis: BTreeSet<(ResourceId, KpiKey)>,
    pub priority: u8,
    pub topology_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("scope of policy `{policy_id}` names nothing in topology version {topology_version}")]
pub struct ScopeResolvesEmpty {
    pub policy_id: String,
    pub topology_version: u64,
}

/// Services matched on every scope dimension.
pub fn matched_services<'a>(policy: &PolicyIr, topo: &'a Topology) -> Vec<&'a Service> {
    let s = &policy.scope;
    topo.services
        .iter()
        .filter(|svc| {
            s.services.matches(&svc.name)
                && s.nodes.matches(&svc.node)
                && s.segments.matches(&svc.segment)
                && s.traffic_class.matches(&svc.traffic_class)
        })
        .collect()
}

pub fn extract_metadata(policy: &PolicyIr, topo: &Topology) -> Result<PolicyMetadata, ScopeResolvesEmpty> {
    let scope = &policy.scope;
    let mut services: Vec<&Service> = matched_services(policy, topo);
    // Access rules also govern the destination segment's services.
    for a in &policy.actions {
        if let Action::Allow { to_segment, .. } | Action::Deny { to_segment, .. } = a {
            services.extend(topo.services.iter().filter(|s| &s.segment == to_segment));
        }
    }

    let mut bound = BTreeSet::new();
    for svc in &services {
        bound.insert(ResourceId::service(&svc.name));
        bound.insert(ResourceId::node(&svc.node));
        bound.extend(Topology::path_links(&topo.service_path(svc)));
    }
    // Node-level scopes (no service, segment or class narrowing) bind the
    // nodes themselves and the links between them.
    let node_level = scope.services.is_any() && scope.segments.is_any() && scope.traffic_class.is_any();
    if node_level {
        for n in topo.nodes.iter().filter(|n| scope.nodes.matches(&n.name)) {
            bound.insert(ResourceId::node(&n.name));
        }
        for l in &topo.links {
            if scope.nodes.matches(&l.a) && scope.nodes.matches(&l.b) {
                bound.insert(l.id());
            }
        }
    }
    if bound.is_empty() {
        return Err(ScopeResolvesEmpty { policy_id: policy.policy_id.clone(), topology_version: topo.version });
    }

    let primary_kind = match (&scope.services, &scope.nodes) {
        (Selector::Only(_), _) => Some(ResourceKind::Service),
        (Selector::Any, Selector::Only(_)) => Some(ResourceKind::Node),
        _ => None,
    };
    let mut bound_kpis = BTreeSet::new();
    for r in &bound {
        let kind = r.kind();
        let primary = primary_kind.map_or(kind != ResourceKind::Link, |k| k == kind);
        for c in &policy.constraints {
            if primary && c.kpi.emitted_by(kind) {
                bound_kpis.insert((r.clone(), c.kpi));
            }
            for p in c.kpi.precursors() {
                if p.emitted_by(kind) {
                    bound_kpis.insert((r.clone(), *p));
                }
            }
        }
    }

    Ok(PolicyMetadata {
        scope_fingerprint: scope.fingerprint(),
        bound_resources: bound,
        bound_kpis,
        priority: policy.priority,
        topology_version: topo.version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent_model::policy::{ActivationMode, CmpOp, Constraint, IntentKind};
    use crate::intent_model::scope::Scope;
    use crate::netsim::topology::fixtures;

    fn latency(scope: Scope) -> PolicyIr {
        PolicyIr {
            policy_id: "p-1".into(),
            intent_id: "i-1".into(),
            kind: IntentKind::LatencyBound,
            scope,
            constraints: vec![Constraint::new(KpiKey::ApiLatency, CmpOp::Leq, 20.0)],
            actions: vec![],
            priority: 50,
            activation_mode: ActivationMode::Immediate,
            schema_version: "1.0".into(),
        }
    }

    fn plain_topology() -> Topology {
        let mut t = fixtures::triangle();
        for s in &mut t.services {
            s.egress = None;
        }
        t
    }

    #[test]
    fn single_service_binds_service_and_host() {
        let t = plain_topology();
        let m = extract_metadata(&latency(Scope::services(["checkout"])), &t).unwrap();
        let want: BTreeSet<_> = [ResourceId::service("checkout"), ResourceId::node("n1")].into();
        assert_eq!(m.bound_resources, want);
        assert!(m.bound_kpis.contains(&(ResourceId::service("checkout"), KpiKey::ApiLatency)));
        assert!(m.bound_kpis.contains(&(ResourceId::node("n1"), KpiKey::CpuUtil)));
        assert!(!m.bound_kpis.contains(&(ResourceId::node("n1"), KpiKey::ApiLatency)));
    }

    #[test]
    fn egress_path_links_are_bound() {
        let t = fixtures::triangle();
        let m = extract_metadata(&latency(Scope::services(["checkout"])), &t).unwrap();
        assert!(m.bound_resources.contains(&ResourceId::link("n1", "n3")));
    }

    #[test]
    fn wildcard_binds_everything() {
        let t = fixtures::triangle();
        let m = extract_metadata(&latency(Scope::wildcard()), &t).unwrap();
        assert_eq!(m.bound_resources, t.resources());
    }

    #[test]
    fn ghost_service_is_rejected() {
        let t = fixtures::triangle();
        let err = extract_metadata(&latency(Scope::services(["ghost"])), &t).unwrap_err();
        assert_eq!(err.policy_id, "p-1");
    }
}
