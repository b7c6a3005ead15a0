// SPDX-License-Identifier: Apache-2.0

//! Brute-force conflict oracle. Policies are evaluated point by point over a
//! small enumerated universe instead of reasoning about selectors, so it
//! shares no logic with the classifier it checks.

use std::collections::BTreeSet;

use loopbench_core::conflict::ConflictKind;
use loopbench_core::intent_model::{Action, ActivationMode, CmpOp, Constraint, IntentKind, PolicyIr, Scope, Selector};
use loopbench_core::KpiKey;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value;

pub const NAMES: [&str; 4] = ["a", "b", "c", "d"];
/// Stands for every name outside the enumerated four; only a wildcard
/// selector matches it.
const OUTSIDE: &str = "~outside";
const KINDS: [IntentKind; 4] =
    [IntentKind::AccessControl, IntentKind::LatencyBound, IntentKind::ThroughputFloor, IntentKind::UtilizationCap];
const KPIS: [KpiKey; 3] = [KpiKey::ApiLatency, KpiKey::SvcThroughput, KpiKey::CpuUtil];

fn universe() -> Vec<&'static str> {
    let mut u = NAMES.to_vec();
    u.push(OUTSIDE);
    u
}

fn member(sel: &Selector, name: &str) -> bool {
    match sel {
        Selector::Any => true,
        Selector::Only(set) => set.iter().any(|n| n == name),
    }
}

type Point = [&'static str; 4];

pub fn points(scope: &Scope) -> BTreeSet<Point> {
    let u = universe();
    let mut out = BTreeSet::new();
    for &s in &u {
        for &n in &u {
            for &g in &u {
                for &t in &u {
                    if member(&scope.services, s)
                        && member(&scope.nodes, n)
                        && member(&scope.segments, g)
                        && member(&scope.traffic_class, t)
                    {
                        out.insert([s, n, g, t]);
                    }
                }
            }
        }
    }
    out
}

/// Candidate KPI values: every half step across a range wider than any
/// threshold the generator emits.
fn grid() -> impl Iterator<Item = f64> {
    (-40..=440).map(|i| i as f64 * 0.5)
}

fn satisfies(cs: &[Constraint], kpi: KpiKey, v: f64) -> bool {
    cs.iter().filter(|c| c.kpi == kpi).all(|c| match c.op {
        CmpOp::Leq => v <= c.value,
        CmpOp::Geq => v >= c.value,
    })
}

fn within_cap(p: &PolicyIr, kpi: KpiKey, v: f64) -> bool {
    p.actions.iter().all(|a| match a {
        Action::CapUtilization { kpi: k, cap_percent, floor_percent } if *k == kpi => {
            v <= *cap_percent && floor_percent.is_none_or(|f| v >= f)
        }
        _ => true,
    })
}

/// Access verdicts a policy gives a (from, to) segment pair.
fn verdicts(p: &PolicyIr, from: &str, to: &str) -> BTreeSet<bool> {
    p.actions
        .iter()
        .filter_map(|a| match a {
            Action::Allow { from_segment, to_segment } if from_segment == from && to_segment == to => Some(true),
            Action::Deny { from_segment, to_segment } if from_segment == from && to_segment == to => Some(false),
            _ => None,
        })
        .collect()
}

fn other_actions(p: &PolicyIr) -> Vec<Value> {
    let mut v: Vec<Value> = p
        .actions
        .iter()
        .filter(|a| !matches!(a, Action::Allow { .. } | Action::Deny { .. }))
        .map(|a| serde_json::to_value(a).unwrap())
        .collect();
    v.sort_by_key(|x| x.to_string());
    v
}

fn behaves_identically(a: &PolicyIr, b: &PolicyIr) -> bool {
    let u = universe();
    let access = u.iter().all(|f| u.iter().all(|t| verdicts(a, f, t) == verdicts(b, f, t)));
    let kpis =
        KpiKey::ALL.iter().all(|&k| grid().all(|v| satisfies(&a.constraints, k, v) == satisfies(&b.constraints, k, v)));
    access && kpis && other_actions(a) == other_actions(b)
}

fn constraint_implied(stronger: &PolicyIr, weaker: &PolicyIr) -> bool {
    KpiKey::ALL
        .iter()
        .all(|&k| grid().all(|v| !satisfies(&stronger.constraints, k, v) || satisfies(&weaker.constraints, k, v)))
}

fn same_action_effects(a: &PolicyIr, b: &PolicyIr) -> bool {
    let u = universe();
    u.iter().all(|f| u.iter().all(|t| verdicts(a, f, t) == verdicts(b, f, t))) && other_actions(a) == other_actions(b)
}

/// The set of conflict kinds the pair exhibits.
pub fn oracle(a: &PolicyIr, b: &PolicyIr) -> BTreeSet<ConflictKind> {
    let mut out = BTreeSet::new();
    let pa = points(&a.scope);
    let pb = points(&b.scope);
    if pa.is_disjoint(&pb) {
        return out;
    }
    let u = universe();
    let access_clash = u.iter().any(|f| {
        u.iter().any(|t| {
            let (va, vb) = (verdicts(a, f, t), verdicts(b, f, t));
            va.iter().any(|x| vb.contains(&!x))
        })
    });
    let kpi_clash = KpiKey::ALL.iter().any(|&k| {
        let both_constrain = a.constraints.iter().any(|c| c.kpi == k) && b.constraints.iter().any(|c| c.kpi == k);
        both_constrain && !grid().any(|v| satisfies(&a.constraints, k, v) && satisfies(&b.constraints, k, v))
    });
    let cap_clash = KpiKey::ALL.iter().any(|&k| {
        let capped =
            |p: &PolicyIr| p.actions.iter().any(|x| matches!(x, Action::CapUtilization { kpi, .. } if *kpi == k));
        capped(a) && capped(b) && !grid().any(|v| within_cap(a, k, v) && within_cap(b, k, v))
    });
    if access_clash || kpi_clash || cap_clash {
        out.insert(ConflictKind::Contradiction);
    }
    if a.kind == b.kind && a.priority != b.priority {
        let (hi, lo, phi, plo) = if a.priority > b.priority { (a, b, &pa, &pb) } else { (b, a, &pb, &pa) };
        if plo.is_subset(phi) && !behaves_identically(hi, lo) {
            out.insert(ConflictKind::Shadowing);
        }
    }
    if a.kind == b.kind && same_action_effects(a, b) && (constraint_implied(a, b) || constraint_implied(b, a)) {
        out.insert(ConflictKind::Redundancy);
    }
    out
}

fn selector(rng: &mut impl Rng) -> Selector {
    if rng.random_bool(0.35) {
        return Selector::Any;
    }
    let n = rng.random_range(1..=NAMES.len());
    Selector::only(NAMES.choose_multiple(rng, n).copied())
}

/// A random policy over the four-name universe. Thresholds come from a small
/// set so that ties and implications occur often.
pub fn random_policy(rng: &mut impl Rng, id: &str) -> PolicyIr {
    let kind = *KINDS.choose(rng).unwrap();
    let scope =
        Scope { services: selector(rng), nodes: selector(rng), segments: selector(rng), traffic_class: selector(rng) };
    let mut constraints = Vec::new();
    let mut actions = Vec::new();
    match kind {
        IntentKind::AccessControl => {
            let mut seen = BTreeSet::new();
            for _ in 0..rng.random_range(1..=2) {
                let from = NAMES[rng.random_range(0..2)].to_string();
                let to = NAMES[rng.random_range(2..4)].to_string();
                if seen.insert((from.clone(), to.clone())) {
                    if rng.random_bool(0.5) {
                        actions.push(Action::Allow { from_segment: from, to_segment: to });
                    } else {
                        actions.push(Action::Deny { from_segment: from, to_segment: to });
                    }
                }
            }
        }
        _ => {
            // At most one constraint per KPI.
            let n = rng.random_range(1..=2);
            for &kpi in KPIS.choose_multiple(rng, n) {
                let op = if rng.random_bool(0.5) { CmpOp::Leq } else { CmpOp::Geq };
                let value = [20.0, 30.0, 40.0, 50.0][rng.random_range(0..4)];
                constraints.push(Constraint::new(kpi, op, value));
            }
            if kind == IntentKind::UtilizationCap && rng.random_bool(0.7) {
                let cap = [60.0, 70.0, 80.0][rng.random_range(0..3)];
                let floor = rng.random_bool(0.5).then(|| [50.0, 65.0, 75.0][rng.random_range(0..3)]);
                actions.push(Action::CapUtilization { kpi: KpiKey::CpuUtil, cap_percent: cap, floor_percent: floor });
            }
            if rng.random_bool(0.3) {
                actions.push(Action::Scale { service: NAMES[rng.random_range(0..4)].to_string(), steps: 1 });
            }
        }
    }
    PolicyIr {
        policy_id: format!("pol-{id}"),
        intent_id: id.to_string(),
        kind,
        scope,
        constraints,
        actions,
        priority: [40, 50, 60][rng.random_range(0..3)],
        activation_mode: ActivationMode::Immediate,
        schema_version: "1.0".into(),
    }
}

/// A pair biased toward overlap: half the time `b` is derived from `a`.
pub fn random_pair(rng: &mut impl Rng, n: usize) -> (PolicyIr, PolicyIr) {
    let a = random_policy(rng, &format!("a{n}"));
    let mut b = random_policy(rng, &format!("b{n}"));
    if rng.random_bool(0.5) {
        b.kind = a.kind;
        if a.kind == IntentKind::AccessControl || rng.random_bool(0.5) {
            b.actions = a.actions.clone();
            for x in &mut b.actions {
                if rng.random_bool(0.3) {
                    *x = match x.clone() {
                        Action::Allow { from_segment, to_segment } => Action::Deny { from_segment, to_segment },
                        Action::Deny { from_segment, to_segment } => Action::Allow { from_segment, to_segment },
                        other => other,
                    };
                }
            }
        }
        if rng.random_bool(0.5) {
            b.constraints = a.constraints.clone();
            if let Some(c) = b.constraints.first_mut() {
                c.value += [-10.0, 0.0, 10.0][rng.random_range(0..3)];
            }
        }
        if rng.random_bool(0.5) {
            b.scope = a.scope.clone();
        }
    }
    (a, b)
}
