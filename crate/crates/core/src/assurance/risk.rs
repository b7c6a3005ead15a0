// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::drift::DriftState;
use crate::config::AssuranceConfig;
use crate::intent_model::{CmpOp, PolicyIr, PolicyMetadata};
use crate::netsim::Topology;
use crate::telemetry::{KpiKey, KpiWindow, ResourceId, ResourceKind, SeriesKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictLabel {
    Healthy,
    AtRisk,
    RootCause,
    Victim,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub resource: ResourceId,
    pub kpi: KpiKey,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssuranceVerdict {
    pub intent_id: String,
    pub risk: f64,
    pub label: VerdictLabel,
    pub attribution: Vec<Attribution>,
    pub lead_time_ticks: Option<u64>,
    pub horizon: u64,
    pub issued_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_cause_ref: Option<String>,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breach {
    pub resource: ResourceId,
    pub kpi: KpiKey,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Compliance {
    Compliant,
    Breached(Vec<Breach>),
    /// No sample yet for some bound constraint series.
    Unknown(Vec<SeriesKey>),
}

/// Checks every constraint against the latest sample of each bound series
/// carrying the constraint's KPI.
pub fn verify_compliance(
    policy: &PolicyIr,
    meta: &PolicyMetadata,
    latest: impl Fn(&ResourceId, KpiKey) -> Option<f64>,
) -> Compliance {
    let mut breaches = Vec::new();
    let mut missing = Vec::new();
    for c in &policy.constraints {
        for (r, k) in meta.bound_kpis.iter().filter(|(_, k)| *k == c.kpi) {
            match latest(r, *k) {
                Some(v) if !c.satisfied_by(v) => {
                    breaches.push(Breach { resource: r.clone(), kpi: *k, value: v, threshold: c.value })
                }
                Some(_) => {}
                None => missing.push((r.clone(), *k)),
            }
        }
    }
    if !breaches.is_empty() {
        Compliance::Breached(breaches)
    } else if !missing.is_empty() {
        Compliance::Unknown(missing)
    } else {
        Compliance::Compliant
    }
}

/// Direction (+1 up, -1 down) in which a series threatens the policy, if any.
pub fn threat_direction(policy: &PolicyIr, kpi: KpiKey) -> Option<f64> {
    if let Some(c) = policy.constraints.iter().find(|c| c.kpi == kpi) {
        return Some(match c.op {
            CmpOp::Leq => 1.0,
            CmpOp::Geq => -1.0,
        });
    }
    policy.constraints.iter().any(|c| c.kpi.precursors().contains(&kpi)).then(|| kpi.badness().sign())
}

pub fn hazard(d: f64, cfg: &AssuranceConfig) -> f64 {
    ((d - cfg.theta_on) / (cfg.theta_sat - cfg.theta_on)).clamp(0.0, 1.0)
}

/// Noisy-OR of per-series hazards.
pub fn combine(hazards: &[f64]) -> f64 {
    1.0 - hazards.iter().map(|h| 1.0 - h).product::<f64>()
}

/// Risk and ranked attribution. Only flagged series moving in the threatened
/// direction contribute.
pub fn predict_risk(
    policy: &PolicyIr,
    meta: &PolicyMetadata,
    drift: &BTreeMap<SeriesKey, DriftState>,
    cfg: &AssuranceConfig,
) -> (f64, Vec<Attribution>) {
    let mut parts = Vec::new();
    for key in &meta.bound_kpis {
        let (Some(s), Some(dir)) = (drift.get(key), threat_direction(policy, key.1)) else {
            continue;
        };
        if !s.flagged || s.score * dir <= 0.0 {
            continue;
        }
        let h = hazard(s.d, cfg);
        if h > 0.0 {
            parts.push((key.clone(), h));
        }
    }
    let hs: Vec<f64> = parts.iter().map(|(_, h)| *h).collect();
    let risk = combine(&hs);
    let total: f64 = hs.iter().sum();
    let mut attribution: Vec<Attribution> =
        parts.into_iter().map(|((resource, kpi), h)| Attribution { resource, kpi, contribution: h / total }).collect();
    attribution.sort_by(|a, b| {
        b.contribution.total_cmp(&a.contribution).then_with(|| (&a.resource, a.kpi).cmp(&(&b.resource, b.kpi)))
    });
    (risk, attribution)
}

/// Ordinary least-squares slope of value against tick.
pub fn ls_slope(points: &[(u64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Ticks until the nearest threatened constraint is crossed on a linear
/// extrapolation from the latest raw sample.
pub fn estimate_lead_time(
    policy: &PolicyIr,
    meta: &PolicyMetadata,
    window: impl Fn(&ResourceId, KpiKey) -> Option<KpiWindow>,
    cfg: &AssuranceConfig,
) -> Option<u64> {
    let mut best: Option<u64> = None;
    for c in &policy.constraints {
        for (r, k) in meta.bound_kpis.iter().filter(|(_, k)| *k == c.kpi) {
            let Some(w) = window(r, *k) else { continue };
            let Some(b) = ls_slope(&w.samples) else { continue };
            let Some((_, latest)) = w.latest() else { continue };
            let gap = match c.op {
                CmpOp::Leq if b > 0.0 => (c.value - latest) / b,
                CmpOp::Geq if b < 0.0 => (latest - c.value) / -b,
                _ => continue,
            };
            let lead = gap.ceil().max(1.0);
            if lead > cfg.horizon as f64 {
                continue;
            }
            let lead = lead as u64;
            best = Some(best.map_or(lead, |x| x.min(lead)));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disambiguated {
    AtRisk,
    RootCause,
    Victim { root_cause_ref: String },
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let p = self.0[x];
        if p == x {
            return x;
        }
        let r = self.find(p);
        self.0[x] = r;
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Resource-sharing components: services joined to their host and their
/// dependencies.
pub fn resource_components(topo: &Topology) -> BTreeMap<ResourceId, usize> {
    let ids: Vec<ResourceId> = topo.resources().into_iter().collect();
    let index: BTreeMap<&ResourceId, usize> = ids.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let mut uf = UnionFind::new(ids.len());
    for s in &topo.services {
        let sid = index[&ResourceId::service(&s.name)];
        uf.union(sid, index[&ResourceId::node(&s.node)]);
        for d in &s.depends_on {
            uf.union(sid, index[&ResourceId::service(d)]);
        }
    }
    ids.iter().enumerate().map(|(i, r)| (r.clone(), uf.find(i))).collect()
}

/// Labels co-drifting intents as root cause or victim per sharing component.
/// `at_risk` maps intent id to its metadata.
pub fn disambiguate(
    at_risk: &BTreeMap<String, &PolicyMetadata>,
    topo: &Topology,
    drift: &BTreeMap<SeriesKey, DriftState>,
) -> BTreeMap<String, Disambiguated> {
    let comps = resource_components(topo);
    let ids: Vec<&String> = at_risk.keys().collect();
    let touch: Vec<BTreeSet<usize>> = ids
        .iter()
        .map(|id| {
            at_risk[*id]
                .bound_resources
                .iter()
                .filter(|r| r.kind() != ResourceKind::Link)
                .filter_map(|r| comps.get(r).copied())
                .collect()
        })
        .collect();
    let mut uf = UnionFind::new(ids.len());
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            let direct = !at_risk[ids[i]].bound_resources.is_disjoint(&at_risk[ids[j]].bound_resources);
            if direct || !touch[i].is_disjoint(&touch[j]) {
                uf.union(i, j);
            }
        }
    }

    let key_of = |id: &String| {
        let meta = at_risk[id];
        let mut onset = u64::MAX;
        let mut dmax: f64 = 0.0;
        for k in &meta.bound_kpis {
            if let Some(s) = drift.get(k) {
                if let Some(o) = s.onset_tick {
                    onset = onset.min(o);
                }
                dmax = dmax.max(s.d);
            }
        }
        (onset, dmax)
    };

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..ids.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    for members in groups.values() {
        if members.len() == 1 {
            out.insert(ids[members[0]].clone(), Disambiguated::AtRisk);
            continue;
        }
        let root = *members
            .iter()
            .min_by(|&&a, &&b| {
                let (oa, da) = key_of(ids[a]);
                let (ob, db) = key_of(ids[b]);
                oa.cmp(&ob).then(db.total_cmp(&da)).then(ids[a].cmp(ids[b]))
            })
            .expect("non-empty component");
        for &m in members {
            let label = if m == root {
                Disambiguated::RootCause
            } else {
                Disambiguated::Victim { root_cause_ref: ids[root].clone() }
            };
            out.insert(ids[m].clone(), label);
        }
    }
    out
}
