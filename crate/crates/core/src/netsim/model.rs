// SPDX-License-Identifier: Apache-2.0

//! Noise-free closed forms for every simulated KPI.

use std::collections::BTreeMap;

use crate::intent_model::{Action, Scope};
use crate::telemetry::{KpiKey, ResourceId, ResourceKind};

use super::fault::FaultKind;
use super::topology::Topology;
use super::SimState;

pub const QUEUE_COEFF: f64 = 2.0;
pub const UTIL_CEILING: f64 = 0.95;
pub const DEPENDENCY_COEFF: f64 = 0.5;
pub const SCALE_STEP: f64 = 0.25;
pub const THROTTLE_CUT: f64 = 0.30;

/// An enforced policy or remediation action and what it was resolved to at
/// apply time.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub strength: f64,
    pub scope: Option<Scope>,
    pub actions: Vec<Action>,
    /// Service -> cpu capacity added to its host at full strength.
    pub scale_capacity: BTreeMap<String, f64>,
    /// Service -> node path after a reroute.
    pub routes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Eval {
    pub node_cpu: BTreeMap<String, f64>,
    pub node_ram: BTreeMap<String, f64>,
    pub node_storage: BTreeMap<String, f64>,
    pub svc_cpu_demand: BTreeMap<String, f64>,
    pub svc_cpu: BTreeMap<String, f64>,
    pub svc_ram: BTreeMap<String, f64>,
    pub svc_latency: BTreeMap<String, f64>,
    pub svc_offered: BTreeMap<String, f64>,
    pub svc_throughput: BTreeMap<String, f64>,
    /// Upper bound for a noisy throughput reading that keeps every link
    /// within capacity.
    pub svc_throughput_cap: BTreeMap<String, f64>,
    pub svc_availability: BTreeMap<String, f64>,
    pub svc_processing: BTreeMap<String, f64>,
    pub svc_path: BTreeMap<String, Vec<String>>,
    /// Link -> (available capacity, allocated throughput).
    pub link_load: BTreeMap<ResourceId, (f64, f64)>,
}

impl Eval {
    /// Noise-free value for one series; backlog-derived KPIs are stateful and
    /// reported by the simulator instead.
    pub fn value(&self, resource: &ResourceId, kpi: KpiKey) -> Option<f64> {
        let name = resource.name();
        match (resource.kind(), kpi) {
            (ResourceKind::Node, KpiKey::CpuUtil) => self.node_cpu.get(name).copied(),
            (ResourceKind::Node, KpiKey::RamUtil) => self.node_ram.get(name).copied(),
            (ResourceKind::Node, KpiKey::StorageUtil) => self.node_storage.get(name).copied(),
            (ResourceKind::Service, KpiKey::CpuUtil) => self.svc_cpu.get(name).copied(),
            (ResourceKind::Service, KpiKey::RamUtil) => self.svc_ram.get(name).copied(),
            (ResourceKind::Service, KpiKey::ApiLatency) => self.svc_latency.get(name).copied(),
            (ResourceKind::Service, KpiKey::SvcThroughput) => self.svc_throughput.get(name).copied(),
            (ResourceKind::Service, KpiKey::AvailabilityIdx) => self.svc_availability.get(name).copied(),
            _ => None,
        }
    }
}

/// `base * (1 + k_q * u / (1 - u))` with `u` capped at the ceiling.
pub fn queueing_latency(base: f64, util_fraction: f64) -> f64 {
    let u = util_fraction.clamp(0.0, UTIL_CEILING);
    base * (1.0 + QUEUE_COEFF * u / (1.0 - u))
}

pub fn availability(cpu_util: f64) -> f64 {
    1.0 - (0.01 * (cpu_util - 90.0).max(0.0)).clamp(0.0, 1.0)
}

fn nodes_governed(scope: &Scope, topo: &Topology) -> Vec<String> {
    let node_level = scope.services.is_any() && scope.segments.is_any() && scope.traffic_class.is_any();
    let mut out: Vec<String> = if node_level {
        topo.nodes.iter().filter(|n| scope.nodes.matches(&n.name)).map(|n| n.name.clone()).collect()
    } else {
        topo.services
            .iter()
            .filter(|s| {
                scope.services.matches(&s.name)
                    && scope.nodes.matches(&s.node)
                    && scope.segments.matches(&s.segment)
                    && scope.traffic_class.matches(&s.traffic_class)
            })
            .map(|s| s.node.clone())
            .collect()
    };
    out.sort();
    out.dedup();
    out
}

fn cap_factor(util: f64, cap: f64, strength: f64) -> f64 {
    if util <= cap || util <= 0.0 {
        1.0
    } else {
        (util - strength * (util - cap)) / util
    }
}

pub fn evaluate(state: &SimState, tick: u64) -> Eval {
    let topo = &state.topology;
    let mut ev = Eval::default();

    let mut node_loss: BTreeMap<&str, f64> = BTreeMap::new();
    let mut runaway: BTreeMap<&str, f64> = BTreeMap::new();
    let mut link_loss: BTreeMap<ResourceId, f64> = BTreeMap::new();
    let mut leak_node: BTreeMap<&str, f64> = BTreeMap::new();
    let mut leak_svc: BTreeMap<&str, f64> = BTreeMap::new();
    for f in &state.faults {
        let i = f.intensity(tick);
        match (f.kind, f.target.kind()) {
            (FaultKind::NodeCpuSaturation, ResourceKind::Node) => *node_loss.entry(f.target.name()).or_default() += i,
            (FaultKind::NodeCpuSaturation, _) => *runaway.entry(f.target.name()).or_default() += i,
            (FaultKind::LinkDegradation, _) => *link_loss.entry(f.target.clone()).or_default() += i,
            (FaultKind::MemoryLeak, ResourceKind::Node) => *leak_node.entry(f.target.name()).or_default() += i,
            (FaultKind::MemoryLeak, _) => *leak_svc.entry(f.target.name()).or_default() += i,
        }
    }

    // Compute and memory.
    let mut extra_cap: BTreeMap<&str, f64> = BTreeMap::new();
    let mut cpu_caps: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut ram_caps: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut storage_caps: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for e in state.effects.values() {
        for (svc, cap) in &e.scale_capacity {
            if let Some(s) = topo.service(svc) {
                *extra_cap.entry(s.node.as_str()).or_default() += e.strength * cap;
            }
        }
        let Some(scope) = &e.scope else { continue };
        for a in &e.actions {
            if let Action::CapUtilization { kpi, cap_percent, .. } = a {
                let table = match kpi {
                    KpiKey::CpuUtil => &mut cpu_caps,
                    KpiKey::RamUtil => &mut ram_caps,
                    KpiKey::StorageUtil => &mut storage_caps,
                    _ => continue,
                };
                for n in nodes_governed(scope, topo) {
                    // Tightest cap wins; strengths of equal caps do not stack.
                    let entry = table.entry(n).or_insert((*cap_percent, e.strength));
                    if *cap_percent < entry.0 {
                        *entry = (*cap_percent, e.strength);
                    } else if *cap_percent == entry.0 {
                        entry.1 = entry.1.max(e.strength);
                    }
                }
            }
        }
    }

    for s in &topo.services {
        let host = topo.node(&s.node).expect("validated placement");
        let d = s.cpu_demand + runaway.get(s.name.as_str()).copied().unwrap_or(0.0) * host.cpu_capacity;
        ev.svc_cpu_demand.insert(s.name.clone(), d);
    }

    let mut node_u: BTreeMap<&str, f64> = BTreeMap::new();
    for n in &topo.nodes {
        let name = n.name.as_str();
        let loss = node_loss.get(name).copied().unwrap_or(0.0).min(0.99);
        let cap = (n.cpu_capacity + extra_cap.get(name).copied().unwrap_or(0.0)) * (1.0 - loss);
        let demand: f64 = topo.services_on(name).map(|s| ev.svc_cpu_demand[&s.name]).sum();
        let raw = 100.0 * demand / cap;
        let factor = cpu_caps.get(name).map_or(1.0, |(c, st)| cap_factor(raw, *c, *st));
        let util = raw * factor;
        node_u.insert(name, util / 100.0);
        ev.node_cpu.insert(n.name.clone(), util.clamp(0.0, 100.0));
        for s in topo.services_on(name) {
            let share = 100.0 * ev.svc_cpu_demand[&s.name] / cap * factor;
            ev.svc_cpu.insert(s.name.clone(), share.clamp(0.0, 100.0));
        }

        let leaked_svc: f64 =
            topo.services_on(name).map(|s| leak_svc.get(s.name.as_str()).copied().unwrap_or(0.0)).sum();
        let ram_demand: f64 = topo.services_on(name).map(|s| s.ram_demand).sum::<f64>()
            + (leak_node.get(name).copied().unwrap_or(0.0) + leaked_svc) * n.ram_capacity;
        let raw = 100.0 * ram_demand / n.ram_capacity;
        let rfactor = ram_caps.get(name).map_or(1.0, |(c, st)| cap_factor(raw, *c, *st));
        ev.node_ram.insert(n.name.clone(), (raw * rfactor).clamp(0.0, 100.0));
        for s in topo.services_on(name) {
            let own = s.ram_demand + leak_svc.get(s.name.as_str()).copied().unwrap_or(0.0) * n.ram_capacity;
            ev.svc_ram.insert(s.name.clone(), (100.0 * own / n.ram_capacity * rfactor).clamp(0.0, 100.0));
        }

        let storage: f64 = topo.services_on(name).map(|s| s.storage_demand).sum();
        let raw = 100.0 * storage / n.storage_capacity;
        let sfactor = storage_caps.get(name).map_or(1.0, |(c, st)| cap_factor(raw, *c, *st));
        ev.node_storage.insert(n.name.clone(), (raw * sfactor).clamp(0.0, 100.0));
    }

    // Latency along the dependency order so dependencies are known first.
    for s in topo.dependency_order().expect("validated topology") {
        let u = node_u[s.node.as_str()];
        let dep: f64 = s.depends_on.iter().map(|d| ev.svc_latency[d]).sum();
        ev.svc_latency.insert(s.name.clone(), queueing_latency(s.base_latency_ms, u) + DEPENDENCY_COEFF * dep);
        ev.svc_availability.insert(s.name.clone(), availability(ev.node_cpu[&s.node]));
        ev.svc_processing.insert(s.name.clone(), 2.0 * s.traffic_demand_mbps * (1.0 - u.min(1.0)));
    }

    // Offered traffic after throttling and access rules.
    let mut reserved: BTreeMap<(ResourceId, String), f64> = BTreeMap::new();
    for s in &topo.services {
        let mut offered = s.traffic_demand_mbps;
        let mut throttle = 0.0;
        for e in state.effects.values() {
            for a in &e.actions {
                match a {
                    Action::Throttle { service } if service == &s.name => throttle += e.strength * THROTTLE_CUT,
                    Action::Deny { from_segment, to_segment } if from_segment == &s.segment => {
                        let reaches =
                            s.depends_on.iter().any(|d| topo.service(d).is_some_and(|t| &t.segment == to_segment));
                        let in_scope = e.scope.as_ref().is_none_or(|sc| {
                            sc.services.matches(&s.name)
                                && sc.nodes.matches(&s.node)
                                && sc.traffic_class.matches(&s.traffic_class)
                        });
                        if reaches && in_scope {
                            offered *= 1.0 - e.strength;
                        }
                    }
                    _ => {}
                }
            }
        }
        offered *= 1.0 - throttle.min(1.0);
        ev.svc_offered.insert(s.name.clone(), offered);
        let path = state
            .effects
            .values()
            .rev()
            .find_map(|e| e.routes.get(&s.name).cloned())
            .unwrap_or_else(|| topo.service_path(s));
        ev.svc_path.insert(s.name.clone(), path);
    }
    for e in state.effects.values() {
        for a in &e.actions {
            if let Action::ReserveBandwidth { mbps, node_a, node_b, service } = a {
                if let Some(path) = topo.shortest_path(node_a, node_b) {
                    for l in Topology::path_links(&path) {
                        *reserved.entry((l, service.clone())).or_default() += mbps * e.strength;
                    }
                }
            }
        }
    }

    let mut alloc: BTreeMap<(ResourceId, String), (f64, f64)> = BTreeMap::new();
    for l in &topo.links {
        let id = l.id();
        let avail = l.capacity_mbps * (1.0 - link_loss.get(&id).copied().unwrap_or(0.0).min(1.0));
        let users: Vec<&str> = ev
            .svc_path
            .iter()
            .filter(|(_, p)| Topology::path_links(p).contains(&id))
            .map(|(s, _)| s.as_str())
            .collect();
        let offered: Vec<f64> = users.iter().map(|s| ev.svc_offered[*s]).collect();
        let guaranteed: Vec<f64> = users
            .iter()
            .zip(&offered)
            .map(|(s, o)| o.min(reserved.get(&(id.clone(), s.to_string())).copied().unwrap_or(0.0)))
            .collect();
        let g_total: f64 = guaranteed.iter().sum();
        let mut used = 0.0;
        if g_total >= avail && g_total > 0.0 {
            for (s, g) in users.iter().zip(&guaranteed) {
                let a = g * avail / g_total;
                used += a;
                alloc.insert((id.clone(), s.to_string()), (a, a));
            }
        } else {
            let remaining = avail - g_total;
            let excess: Vec<f64> = offered.iter().zip(&guaranteed).map(|(o, g)| o - g).collect();
            let e_total: f64 = excess.iter().sum();
            for (k, s) in users.iter().enumerate() {
                let share =
                    if e_total > 0.0 { remaining * excess[k] / e_total } else { remaining / users.len() as f64 };
                let a = guaranteed[k] + excess[k].min(share);
                used += a;
                alloc.insert((id.clone(), s.to_string()), (a, guaranteed[k] + share));
            }
        }
        ev.link_load.insert(id, (avail, used));
    }
    for s in &topo.services {
        let links = Topology::path_links(&ev.svc_path[&s.name]);
        let offered = ev.svc_offered[&s.name];
        let (thr, cap) = links.iter().fold((offered, f64::INFINITY), |(t, c), l| {
            let (a, fair) = alloc[&(l.clone(), s.name.clone())];
            (t.min(a), c.min(fair))
        });
        ev.svc_throughput.insert(s.name.clone(), thr);
        ev.svc_throughput_cap.insert(s.name.clone(), cap);
    }
    ev
}
