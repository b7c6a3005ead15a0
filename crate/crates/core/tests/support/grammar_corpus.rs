// SPDX-License-Identifier: Apache-2.0

//! Sixty controlled-language intents, ten per kind, each paired with the
//! policy document it should compile to. Expected documents are assembled
//! here field by field from the intent's parameters, not by the parser.

use serde_json::{json, Value};

pub struct Case {
    pub text: String,
    pub kind: &'static str,
    pub expected: Value,
}

fn scope(services: Value, nodes: Value, segments: Value) -> Value {
    json!({"services": services, "nodes": nodes, "segments": segments, "traffic_class": "*"})
}

fn doc(kind: &str, scope: Value, constraints: Value, actions: Value, priority: u64, canary: Option<f64>) -> Value {
    let activation = match canary {
        Some(f) => json!({"mode": "Canary", "fraction": f}),
        None => json!({"mode": "Immediate"}),
    };
    json!({
        "schema_version": "1.0",
        "policy_id": "policy",
        "intent_id": "intent",
        "kind": kind,
        "scope": scope,
        "constraints": constraints,
        "actions": actions,
        "priority": priority,
        "activation_mode": activation,
    })
}

fn suffix(priority: Option<u64>, canary_pct: Option<u64>) -> String {
    let mut s = String::new();
    if let Some(p) = priority {
        s.push_str(&format!(" with priority {p}"));
    }
    if let Some(c) = canary_pct {
        s.push_str(&format!(" as canary {c} percent"));
    }
    s
}

fn fraction(pct: Option<u64>) -> Option<f64> {
    pct.map(|p| p as f64 / 100.0)
}

pub fn corpus() -> Vec<Case> {
    let mut out = Vec::new();

    // value, unit, service, segment, priority, canary percent
    let latency: [(u64, &str, &str, Option<&str>, Option<u64>, Option<u64>); 10] = [
        (20, "ms", "checkout", None, None, None),
        (5, "ms", "cart", None, Some(70), None),
        (150, "ms", "search", Some("public"), None, None),
        (1, "s", "reports", None, None, None),
        (2, "s", "batch", Some("internal"), Some(10), None),
        (35, "ms", "api-gw", None, None, Some(20)),
        (12, "ms", "auth_v2", None, Some(90), Some(50)),
        (80, "ms", "ledger", Some("finance"), None, None),
        (45, "ms", "inventory", None, Some(0), None),
        (60, "ms", "media.cdn", None, Some(100), None),
    ];
    for (v, unit, svc, seg, prio, canary) in latency {
        let mut text = format!("guarantee latency below {v} {unit} for service {svc}");
        if let Some(s) = seg {
            text.push_str(&format!(" in segment {s}"));
        }
        text.push_str(&suffix(prio, canary));
        let ms = if unit == "s" { v * 1000 } else { v };
        let segments = seg.map_or(json!("*"), |s| json!([s]));
        out.push(Case {
            text,
            kind: "LatencyBound",
            expected: doc(
                "LatencyBound",
                scope(json!([svc]), json!("*"), segments),
                json!([{"kpi": "api_latency", "op": "LEQ", "value": ms, "unit": "ms"}]),
                json!([]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }

    // service, value, unit, priority, canary
    let throughput: [(&str, u64, &str, Option<u64>, Option<u64>); 10] = [
        ("web", 70, "mbps", None, None),
        ("batch", 35, "mbps", None, None),
        ("video", 2, "gbps", None, None),
        ("backup", 500, "mbps", Some(30), None),
        ("sync", 1, "gbps", Some(60), None),
        ("ingest", 120, "mbps", None, Some(10)),
        ("export", 15, "mbps", Some(55), Some(25)),
        ("telemetry", 8, "mbps", None, None),
        ("replica-1", 250, "mbps", None, None),
        ("stream", 3, "gbps", Some(80), None),
    ];
    for (svc, v, unit, prio, canary) in throughput {
        let text = format!("ensure throughput of service {svc} at least {v} {unit}{}", suffix(prio, canary));
        let mbps = if unit == "gbps" { v * 1000 } else { v };
        out.push(Case {
            text,
            kind: "ThroughputFloor",
            expected: doc(
                "ThroughputFloor",
                scope(json!([svc]), json!("*"), json!("*")),
                json!([{"kpi": "svc_throughput", "op": "GEQ", "value": mbps, "unit": "mbps"}]),
                json!([]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }

    // service, percent, expected index, priority, canary
    let availability: [(&str, u64, f64, Option<u64>, Option<u64>); 10] = [
        ("checkout", 99, 0.99, None, None),
        ("cart", 95, 0.95, None, None),
        ("auth", 100, 1.0, Some(95), None),
        ("search", 90, 0.9, None, None),
        ("ledger", 98, 0.98, Some(75), None),
        ("mail", 50, 0.5, None, Some(30)),
        ("queue", 97, 0.97, None, None),
        ("dns", 99, 0.99, Some(99), None),
        ("billing", 96, 0.96, None, Some(40)),
        ("cache", 80, 0.8, Some(20), None),
    ];
    for (svc, pct, idx, prio, canary) in availability {
        let text = format!("ensure availability of service {svc} at least {pct} percent{}", suffix(prio, canary));
        out.push(Case {
            text,
            kind: "AvailabilityFloor",
            expected: doc(
                "AvailabilityFloor",
                scope(json!([svc]), json!("*"), json!("*")),
                json!([{"kpi": "availability_idx", "op": "GEQ", "value": idx, "unit": "index"}]),
                json!([]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }

    // resource, dimension word, name, cap, priority, canary
    let utilization: [(&str, &str, &str, u64, Option<u64>, Option<u64>); 10] = [
        ("cpu", "service", "checkout", 80, None, None),
        ("cpu", "node", "n1", 90, None, None),
        ("ram", "service", "cart", 70, None, None),
        ("ram", "node", "n2", 85, Some(40), None),
        ("storage", "service", "ledger", 60, None, None),
        ("storage", "node", "n3", 95, None, Some(10)),
        ("cpu", "service", "batch", 50, Some(65), None),
        ("cpu", "node", "edge-7", 75, None, None),
        ("ram", "service", "search", 88, None, Some(50)),
        ("storage", "node", "n1", 99, Some(5), None),
    ];
    for (res, dim, name, cap, prio, canary) in utilization {
        let text = format!("limit {res} utilization of {dim} {name} to {cap} percent{}", suffix(prio, canary));
        let kpi = format!("{res}_util");
        let sc = if dim == "node" {
            scope(json!("*"), json!([name]), json!("*"))
        } else {
            scope(json!([name]), json!("*"), json!("*"))
        };
        out.push(Case {
            text,
            kind: "UtilizationCap",
            expected: doc(
                "UtilizationCap",
                sc,
                json!([{"kpi": kpi, "op": "LEQ", "value": cap, "unit": "%"}]),
                json!([{"type": "CapUtilization", "params": {"kpi": kpi, "cap_percent": cap}}]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }

    // verb, from, to, priority, canary
    let access: [(&str, &str, &str, Option<u64>, Option<u64>); 10] = [
        ("block", "guest", "finance", None, None),
        ("allow", "guest", "finance", None, None),
        ("allow", "office", "printers", None, None),
        ("block", "iot", "corp", Some(90), None),
        ("allow", "dmz", "web", Some(40), None),
        ("block", "lab", "prod", None, Some(20)),
        ("allow", "vpn", "internal", None, None),
        ("block", "public", "admin", Some(100), None),
        ("allow", "corp", "dmz", None, Some(5)),
        ("block", "contractors", "hr", None, None),
    ];
    for (verb, from, to, prio, canary) in access {
        let text = format!("{verb} traffic from segment {from} to segment {to}{}", suffix(prio, canary));
        let ty = if verb == "allow" { "Allow" } else { "Deny" };
        out.push(Case {
            text,
            kind: "AccessControl",
            expected: doc(
                "AccessControl",
                scope(json!("*"), json!("*"), json!([from])),
                json!([]),
                json!([{"type": ty, "params": {"from_segment": from, "to_segment": to}}]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }

    // mbps, service, node a, node b, priority, canary
    let reserve: [(u64, &str, &str, &str, Option<u64>, Option<u64>); 10] = [
        (200, "web", "n1", "n2", None, None),
        (100, "batch", "n3", "n2", None, None),
        (50, "voice", "n1", "n3", Some(85), None),
        (10, "backup", "n2", "n3", None, None),
        (400, "video", "n1", "n2", None, Some(20)),
        (25, "sync", "edge-1", "core-1", None, None),
        (75, "replica", "n2", "n1", Some(60), None),
        (300, "ingest", "n3", "n1", None, None),
        (5, "mgmt", "n1", "n2", Some(95), Some(50)),
        (150, "stream", "n2", "n3", None, None),
    ];
    for (mbps, svc, a, b, prio, canary) in reserve {
        let text =
            format!("reserve {mbps} mbps for service {svc} between node {a} and node {b}{}", suffix(prio, canary));
        out.push(Case {
            text,
            kind: "BandwidthReservation",
            expected: doc(
                "BandwidthReservation",
                scope(json!([svc]), json!("*"), json!("*")),
                json!([{"kpi": "svc_throughput", "op": "GEQ", "value": mbps, "unit": "mbps"}]),
                json!([{"type": "ReserveBandwidth", "params": {"mbps": mbps, "node_a": a, "node_b": b, "service": svc}}]),
                prio.unwrap_or(50),
                fraction(canary),
            ),
        });
    }
    out
}

/// Structural equality with numbers compared by value, so `1` equals `1.0`.
pub fn same_json(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| same_json(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| same_json(v, w)))
        }
        _ => a == b,
    }
}
