// SPDX-License-Identifier: Apache-2.0

//! Deterministic controlled-language translator.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::intent_model::{DEFAULT_PRIORITY, SCHEMA_VERSION};

/// Furthest point the parser reached before every form failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    /// 1-based token index.
    pub position: usize,
    pub expected: Vec<String>,
    pub found: Option<String>,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse failure at token {}: expected one of [{}]", self.position, self.expected.join(", "))?;
        match &self.found {
            Some(t) => write!(f, ", found `{t}`"),
            None => write!(f, ", found end of input"),
        }
    }
}

impl std::error::Error for ParseFailure {}

#[derive(Clone, Copy)]
enum Pat {
    /// Literal; `|` separates alternatives, the matched word is captured when
    /// there is more than one.
    W(&'static str),
    Num,
    Name,
    Opt(&'static [Pat]),
}

use Pat::*;

const LATENCY: &[Pat] = &[
    W("guarantee"),
    W("latency"),
    W("below"),
    Num,
    W("ms|s"),
    W("for"),
    W("service"),
    Name,
    Opt(&[W("in"), W("segment"), Name]),
];
const THROUGHPUT: &[Pat] =
    &[W("ensure"), W("throughput"), W("of"), W("service"), Name, W("at"), W("least"), Num, W("mbps|gbps")];
const AVAILABILITY: &[Pat] =
    &[W("ensure"), W("availability"), W("of"), W("service"), Name, W("at"), W("least"), Num, W("percent")];
const UTILIZATION: &[Pat] =
    &[W("limit"), W("cpu|ram|storage"), W("utilization"), W("of"), W("service|node"), Name, W("to"), Num, W("percent")];
const ACCESS: &[Pat] = &[W("allow|block"), W("traffic"), W("from"), W("segment"), Name, W("to"), W("segment"), Name];
const RESERVE: &[Pat] = &[
    W("reserve"),
    Num,
    W("mbps"),
    W("for"),
    W("service"),
    Name,
    W("between"),
    W("node"),
    Name,
    W("and"),
    W("node"),
    Name,
];
const PRIORITY: &[Pat] = &[W("with"), W("priority"), Num];
const CANARY: &[Pat] = &[W("as"), W("canary"), Num, W("percent")];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Latency,
    Throughput,
    Availability,
    Utilization,
    Access,
    Reserve,
}

const FORMS: [(Form, &[Pat]); 6] = [
    (Form::Latency, LATENCY),
    (Form::Throughput, THROUGHPUT),
    (Form::Availability, AVAILABILITY),
    (Form::Utilization, UTILIZATION),
    (Form::Access, ACCESS),
    (Form::Reserve, RESERVE),
];

struct Parser<'a> {
    tokens: &'a [String],
    furthest: usize,
    expected: BTreeSet<String>,
}

impl Parser<'_> {
    fn fail(&mut self, pos: usize, what: &str) {
        if pos > self.furthest {
            self.furthest = pos;
            self.expected.clear();
        }
        if pos == self.furthest {
            self.expected.insert(what.to_string());
        }
    }

    fn seq(&mut self, pats: &[Pat], mut pos: usize, caps: &mut Vec<Option<String>>) -> Option<usize> {
        for p in pats {
            let tok = self.tokens.get(pos).map(String::as_str);
            match *p {
                W(lit) => {
                    let alts: Vec<&str> = lit.split('|').collect();
                    match tok.filter(|t| alts.contains(t)) {
                        Some(t) => {
                            if alts.len() > 1 {
                                caps.push(Some(t.to_string()));
                            }
                        }
                        None => {
                            for a in alts {
                                self.fail(pos, &format!("`{a}`"));
                            }
                            return None;
                        }
                    }
                }
                Num => match tok.filter(|t| t.parse::<f64>().is_ok_and(|v| v.is_finite() && v >= 0.0)) {
                    Some(t) => caps.push(Some(t.to_string())),
                    None => {
                        self.fail(pos, "<number>");
                        return None;
                    }
                },
                Name => match tok.filter(|t| is_name(t)) {
                    Some(t) => caps.push(Some(t.to_string())),
                    None => {
                        self.fail(pos, "<name>");
                        return None;
                    }
                },
                Opt(inner) => {
                    let mut sub = Vec::new();
                    match self.seq(inner, pos, &mut sub) {
                        Some(next) => {
                            caps.extend(sub);
                            pos = next;
                            continue;
                        }
                        None => {
                            let holes = inner.iter().filter(|p| !matches!(p, W(l) if !l.contains('|'))).count();
                            caps.extend(std::iter::repeat_n(None, holes));
                            continue;
                        }
                    }
                }
            }
            pos += 1;
        }
        Some(pos)
    }
}

fn is_name(t: &str) -> bool {
    let mut chars = t.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn num(s: &Option<String>) -> f64 {
    s.as_deref().and_then(|t| t.parse().ok()).unwrap_or(0.0)
}

fn name(s: &Option<String>) -> String {
    s.clone().unwrap_or_default()
}

fn number_value(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        json!(v as i64)
    } else {
        json!(v)
    }
}

/// Parses one controlled-language intent into a policy document. The ids are
/// placeholders; `realize` assigns the real ones.
pub fn grammar_translate(source_text: &str) -> Result<Value, ParseFailure> {
    let tokens: Vec<String> = source_text.split_whitespace().map(str::to_lowercase).collect();
    let mut p = Parser { tokens: &tokens, furthest: 0, expected: BTreeSet::new() };

    let mut matched = None;
    for (form, pats) in FORMS {
        let mut caps = Vec::new();
        if let Some(end) = p.seq(pats, 0, &mut caps) {
            matched = Some((form, caps, end));
            break;
        }
    }
    let failure = |p: &Parser| ParseFailure {
        position: p.furthest + 1,
        expected: p.expected.iter().cloned().collect(),
        found: tokens.get(p.furthest).cloned(),
    };
    let Some((form, caps, mut pos)) = matched else {
        return Err(failure(&p));
    };

    let mut priority = None;
    let mut canary = None;
    while pos < tokens.len() {
        let mut sub = Vec::new();
        if priority.is_none() {
            if let Some(next) = p.seq(PRIORITY, pos, &mut sub) {
                priority = Some(num(&sub[0]));
                pos = next;
                continue;
            }
        }
        sub.clear();
        if canary.is_none() {
            if let Some(next) = p.seq(CANARY, pos, &mut sub) {
                canary = Some(num(&sub[0]));
                pos = next;
                continue;
            }
        }
        p.fail(pos, "<end>");
        return Err(failure(&p));
    }

    let wildcard = json!({"services": "*", "nodes": "*", "segments": "*", "traffic_class": "*"});
    let mut scope = wildcard.clone();
    let (kind, constraints, actions) = match form {
        Form::Latency => {
            let mut v = num(&caps[0]);
            if caps[1].as_deref() == Some("s") {
                v *= 1000.0;
            }
            scope["services"] = json!([name(&caps[2])]);
            if let Some(seg) = &caps[3] {
                scope["segments"] = json!([seg]);
            }
            (
                "LatencyBound",
                json!([{"kpi": "api_latency", "op": "LEQ", "value": number_value(v), "unit": "ms"}]),
                json!([]),
            )
        }
        Form::Throughput => {
            let mut v = num(&caps[1]);
            if caps[2].as_deref() == Some("gbps") {
                v *= 1000.0;
            }
            scope["services"] = json!([name(&caps[0])]);
            (
                "ThroughputFloor",
                json!([{"kpi": "svc_throughput", "op": "GEQ", "value": number_value(v), "unit": "mbps"}]),
                json!([]),
            )
        }
        Form::Availability => {
            scope["services"] = json!([name(&caps[0])]);
            (
                "AvailabilityFloor",
                json!([{"kpi": "availability_idx", "op": "GEQ", "value": number_value(num(&caps[1]) / 100.0), "unit": "index"}]),
                json!([]),
            )
        }
        Form::Utilization => {
            let kpi = format!("{}_util", name(&caps[0]));
            let dim = if caps[1].as_deref() == Some("node") { "nodes" } else { "services" };
            scope[dim] = json!([name(&caps[2])]);
            let cap = number_value(num(&caps[3]));
            (
                "UtilizationCap",
                json!([{"kpi": kpi, "op": "LEQ", "value": cap, "unit": "%"}]),
                json!([{"type": "CapUtilization", "params": {"kpi": kpi, "cap_percent": cap}}]),
            )
        }
        Form::Access => {
            let (from, to) = (name(&caps[1]), name(&caps[2]));
            scope["segments"] = json!([from]);
            let ty = if caps[0].as_deref() == Some("allow") { "Allow" } else { "Deny" };
            ("AccessControl", json!([]), json!([{"type": ty, "params": {"from_segment": from, "to_segment": to}}]))
        }
        Form::Reserve => {
            let mbps = number_value(num(&caps[0]));
            let svc = name(&caps[1]);
            scope["services"] = json!([svc]);
            (
                "BandwidthReservation",
                json!([{"kpi": "svc_throughput", "op": "GEQ", "value": mbps, "unit": "mbps"}]),
                json!([{"type": "ReserveBandwidth", "params": {"mbps": mbps, "node_a": name(&caps[2]), "node_b": name(&caps[3]), "service": svc}}]),
            )
        }
    };
    let activation = match canary {
        Some(pct) => json!({"mode": "Canary", "fraction": number_value(pct / 100.0)}),
        None => json!({"mode": "Immediate"}),
    };
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "policy_id": "policy",
        "intent_id": "intent",
        "kind": kind,
        "scope": scope,
        "constraints": constraints,
        "actions": actions,
        "priority": priority.map_or(json!(DEFAULT_PRIORITY), number_value),
        "activation_mode": activation,
    }))
}
