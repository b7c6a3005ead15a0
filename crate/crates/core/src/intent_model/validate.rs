// SPDX-License-Identifier: Apache-2.0

//! Schema validation of untyped policy documents.
//!
//! The validator keeps going after the first problem so a single pass yields
//! every violated rule; each violation carries a JSON-pointer-style path and
//! a machine-readable code that the correction prompt keys on.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::policy::{ActionType, IntentKind, PolicyIr, SCHEMA_VERSION};
use crate::telemetry::KpiKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    MissingField,
    UnknownField,
    BadEnum,
    BadType,
    UnitMismatch,
    RangeViolation,
    EmptyScopeSet,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 7] = [
        ViolationCode::MissingField,
        ViolationCode::UnknownField,
        ViolationCode::BadEnum,
        ViolationCode::BadType,
        ViolationCode::UnitMismatch,
        ViolationCode::RangeViolation,
        ViolationCode::EmptyScopeSet,
    ];
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("policy document failed validation ({} violations)", violations.len())]
pub struct ValidationFailure {
    pub violations: Vec<Violation>,
}

impl ValidationFailure {
    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    pub fn has(&self, code: ViolationCode, path: &str) -> bool {
        self.violations.iter().any(|v| v.code == code && v.path == path)
    }
}

const TOP_FIELDS: [&str; 9] = [
    "policy_id",
    "intent_id",
    "kind",
    "scope",
    "constraints",
    "actions",
    "priority",
    "activation_mode",
    "schema_version",
];
const SCOPE_FIELDS: [&str; 4] = ["services", "nodes", "segments", "traffic_class"];
const CONSTRAINT_FIELDS: [&str; 4] = ["kpi", "op", "value", "unit"];

#[derive(Default)]
struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, detail: impl Into<String>) {
        self.out.push(Violation { code, path: path.into(), detail: detail.into() });
    }

    fn unknown_fields(&mut self, obj: &Map<String, Value>, allowed: &[&str], base: &str) {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                self.push(ViolationCode::UnknownField, format!("{base}/{k}"), "field not in schema");
            }
        }
    }

    fn required<'a>(&mut self, obj: &'a Map<String, Value>, key: &str, base: &str) -> Option<&'a Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.push(ViolationCode::MissingField, format!("{base}/{key}"), "required field");
        }
        v
    }

    fn string<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a str> {
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.push(ViolationCode::BadType, path, "expected a string");
                None
            }
        }
    }

    fn non_empty_string<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a str> {
        let s = self.string(v, path)?;
        if s.is_empty() {
            self.push(ViolationCode::RangeViolation, path, "must be non-empty");
            return None;
        }
        Some(s)
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.push(ViolationCode::BadType, path, "expected a number");
                None
            }
        }
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        match v.as_object() {
            Some(o) => Some(o),
            None => {
                self.push(ViolationCode::BadType, path, "expected an object");
                None
            }
        }
    }

    fn array<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Vec<Value>> {
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.push(ViolationCode::BadType, path, "expected an array");
                None
            }
        }
    }
}

/// Validates `candidate` and returns the typed policy, or every violation.
pub fn validate_policy_ir(candidate: &Value) -> Result<PolicyIr, ValidationFailure> {
    let mut c = Checker::default();
    let Some(root) = candidate.as_object() else {
        c.push(ViolationCode::BadType, "/", "policy document must be an object");
        return Err(ValidationFailure { violations: c.out });
    };
    c.unknown_fields(root, &TOP_FIELDS, "");

    if let Some(v) = c.required(root, "schema_version", "") {
        if let Some(s) = c.string(v, "/schema_version") {
            if s != SCHEMA_VERSION {
                c.push(ViolationCode::BadEnum, "/schema_version", format!("unsupported schema version {s}"));
            }
        }
    }
    for key in ["policy_id", "intent_id"] {
        if let Some(v) = c.required(root, key, "") {
            c.non_empty_string(v, &format!("/{key}"));
        }
    }

    let kind = c.required(root, "kind", "").and_then(|v| {
        let s = c.string(v, "/kind")?;
        let k = IntentKind::parse(s);
        if k.is_none() {
            c.push(ViolationCode::BadEnum, "/kind", format!("unknown intent kind {s}"));
        }
        k
    });

    if let Some(v) = c.required(root, "scope", "") {
        check_scope(&mut c, v);
    }
    if let Some(v) = c.required(root, "constraints", "") {
        check_constraints(&mut c, v, kind);
    }
    if let Some(v) = c.required(root, "actions", "") {
        check_actions(&mut c, v, kind);
    }
    if let Some(v) = c.required(root, "priority", "") {
        match v.as_u64() {
            Some(p) if p <= 100 => {}
            Some(p) => c.push(ViolationCode::RangeViolation, "/priority", format!("{p} not in 0..=100")),
            None if v.as_i64().is_some() => c.push(ViolationCode::RangeViolation, "/priority", "negative priority"),
            None => c.push(ViolationCode::BadType, "/priority", "expected an integer"),
        }
    }
    if let Some(v) = c.required(root, "activation_mode", "") {
        check_activation(&mut c, v);
    }

    if !c.out.is_empty() {
        c.out.sort();
        c.out.dedup();
        return Err(ValidationFailure { violations: c.out });
    }
    serde_json::from_value::<PolicyIr>(candidate.clone()).map_err(|e| ValidationFailure {
        violations: vec![Violation { code: ViolationCode::BadType, path: "/".into(), detail: e.to_string() }],
    })
}

fn check_scope(c: &mut Checker, v: &Value) {
    let Some(obj) = c.object(v, "/scope") else { return };
    c.unknown_fields(obj, &SCOPE_FIELDS, "/scope");
    for dim in SCOPE_FIELDS {
        let path = format!("/scope/{dim}");
        let Some(sel) = c.required(obj, dim, "/scope") else { continue };
        match sel {
            Value::String(s) if s == "*" => {}
            Value::String(s) => c.push(ViolationCode::BadEnum, &path, format!("`{s}`: use \"*\" or an array")),
            Value::Array(items) if items.is_empty() => {
                c.push(ViolationCode::EmptyScopeSet, &path, "explicit sets must be non-empty")
            }
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    c.non_empty_string(item, &format!("{path}/{i}"));
                }
            }
            _ => c.push(ViolationCode::BadType, &path, "expected \"*\" or an array of names"),
        }
    }
}

fn check_constraints(c: &mut Checker, v: &Value, kind: Option<IntentKind>) {
    let Some(items) = c.array(v, "/constraints") else { return };
    match kind {
        Some(IntentKind::AccessControl) if !items.is_empty() => {
            c.push(ViolationCode::UnknownField, "/constraints", "AccessControl policies carry no KPI constraints");
            return;
        }
        Some(k) if k.is_kpi_bearing() && items.is_empty() => {
            c.push(ViolationCode::RangeViolation, "/constraints", "at least one constraint required");
        }
        _ => {}
    }
    for (i, item) in items.iter().enumerate() {
        let base = format!("/constraints/{i}");
        let Some(obj) = c.object(item, &base) else { continue };
        c.unknown_fields(obj, &CONSTRAINT_FIELDS, &base);
        let kpi = c.required(obj, "kpi", &base).and_then(|v| {
            let s = c.string(v, &format!("{base}/kpi"))?;
            match s.parse::<KpiKey>() {
                Ok(k) => {
                    if let Some(kind) = kind {
                        if !kind.allowed_kpis().contains(&k) {
                            c.push(ViolationCode::BadEnum, format!("{base}/kpi"), format!("{k} is not a {kind} KPI"));
                        }
                    }
                    Some(k)
                }
                Err(_) => {
                    c.push(ViolationCode::BadEnum, format!("{base}/kpi"), format!("unknown kpi {s}"));
                    None
                }
            }
        });
        if let Some(v) = c.required(obj, "op", &base) {
            if let Some(s) = c.string(v, &format!("{base}/op")) {
                if s != "LEQ" && s != "GEQ" {
                    c.push(ViolationCode::BadEnum, format!("{base}/op"), "op must be LEQ or GEQ");
                }
            }
        }
        if let Some(v) = c.required(obj, "value", &base) {
            if let Some(x) = c.number(v, &format!("{base}/value")) {
                if x < 0.0 {
                    c.push(ViolationCode::RangeViolation, format!("{base}/value"), "must be >= 0");
                } else if let Some(max) = kpi.and_then(KpiKey::max_value) {
                    if x > max {
                        c.push(ViolationCode::RangeViolation, format!("{base}/value"), format!("must be <= {max}"));
                    }
                }
            }
        }
        if let Some(v) = c.required(obj, "unit", &base) {
            if let Some(u) = c.string(v, &format!("{base}/unit")) {
                if let Some(k) = kpi {
                    if u != k.unit() {
                        c.push(
                            ViolationCode::UnitMismatch,
                            format!("{base}/unit"),
                            format!("{k} is measured in {}", k.unit()),
                        );
                    }
                }
            }
        }
    }
}

enum ParamKind {
    Text,
    PositiveNumber,
    Percent,
    OptionalPercent,
    UtilKpi,
    PositiveInteger,
}

fn param_schema(t: ActionType) -> &'static [(&'static str, ParamKind)] {
    use ParamKind::*;
    match t {
        ActionType::Allow | ActionType::Deny => &[("from_segment", Text), ("to_segment", Text)],
        ActionType::ReserveBandwidth => {
            &[("mbps", PositiveNumber), ("node_a", Text), ("node_b", Text), ("service", Text)]
        }
        ActionType::CapUtilization => &[("kpi", UtilKpi), ("cap_percent", Percent), ("floor_percent", OptionalPercent)],
        ActionType::SetPriorityClass => &[("class", Text)],
        ActionType::Scale => &[("service", Text), ("steps", PositiveInteger)],
        ActionType::Reroute | ActionType::Throttle => &[("service", Text)],
    }
}

fn check_actions(c: &mut Checker, v: &Value, kind: Option<IntentKind>) {
    let Some(items) = c.array(v, "/actions") else { return };
    let mut types = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let base = format!("/actions/{i}");
        let Some(obj) = c.object(item, &base) else { continue };
        c.unknown_fields(obj, &["type", "params"], &base);
        let atype = c.required(obj, "type", &base).and_then(|v| {
            let s = c.string(v, &format!("{base}/type"))?;
            let t = ActionType::parse(s);
            match (t, kind) {
                (None, _) => c.push(ViolationCode::BadEnum, format!("{base}/type"), format!("unknown action {s}")),
                (Some(t), Some(k)) if !k.allows_action(t) => {
                    c.push(ViolationCode::BadEnum, format!("{base}/type"), format!("{s} is not permitted for {k}"))
                }
                _ => {}
            }
            t
        });
        let Some(params) = c.required(obj, "params", &base) else { continue };
        let pbase = format!("{base}/params");
        let Some(pobj) = c.object(params, &pbase) else { continue };
        let Some(atype) = atype else { continue };
        types.push(atype);
        let schema = param_schema(atype);
        let names: Vec<&str> = schema.iter().map(|(n, _)| *n).collect();
        c.unknown_fields(pobj, &names, &pbase);
        let mut cap = None;
        let mut floor = None;
        for (name, pk) in schema {
            let path = format!("{pbase}/{name}");
            let val = match pk {
                ParamKind::OptionalPercent => match pobj.get(*name) {
                    Some(v) => v,
                    None => continue,
                },
                _ => match c.required(pobj, name, &pbase) {
                    Some(v) => v,
                    None => continue,
                },
            };
            match pk {
                ParamKind::Text => {
                    c.non_empty_string(val, &path);
                }
                ParamKind::PositiveNumber => {
                    if let Some(x) = c.number(val, &path) {
                        if x <= 0.0 {
                            c.push(ViolationCode::RangeViolation, &path, "must be > 0");
                        }
                    }
                }
                ParamKind::Percent | ParamKind::OptionalPercent => {
                    if let Some(x) = c.number(val, &path) {
                        let lo_ok = if matches!(pk, ParamKind::Percent) { x > 0.0 } else { x >= 0.0 };
                        if !lo_ok || x > 100.0 {
                            c.push(ViolationCode::RangeViolation, &path, "percent out of range");
                        } else if matches!(pk, ParamKind::Percent) {
                            cap = Some(x);
                        } else {
                            floor = Some(x);
                        }
                    }
                }
                ParamKind::UtilKpi => {
                    if let Some(s) = c.string(val, &path) {
                        match s.parse::<KpiKey>() {
                            Ok(k) if k.is_utilization() => {}
                            _ => c.push(ViolationCode::BadEnum, &path, "expected a utilization KPI"),
                        }
                    }
                }
                ParamKind::PositiveInteger => match val.as_u64() {
                    Some(n) if n >= 1 && n <= u32::MAX as u64 => {}
                    Some(_) => c.push(ViolationCode::RangeViolation, &path, "must be >= 1"),
                    None => c.push(ViolationCode::BadType, &path, "expected a positive integer"),
                },
            }
        }
        if let (Some(cap), Some(floor)) = (cap, floor) {
            if floor > cap {
                c.push(ViolationCode::RangeViolation, format!("{pbase}/floor_percent"), "floor exceeds cap");
            }
        }
    }
    match kind {
        Some(IntentKind::AccessControl) if items.len() != 1 => {
            c.push(ViolationCode::RangeViolation, "/actions", "AccessControl requires exactly one Allow or Deny action")
        }
        Some(IntentKind::BandwidthReservation)
            if !types.contains(&ActionType::ReserveBandwidth) && !items.is_empty() =>
        {
            c.push(ViolationCode::RangeViolation, "/actions", "a ReserveBandwidth action is required")
        }
        Some(IntentKind::BandwidthReservation) if items.is_empty() => {
            c.push(ViolationCode::RangeViolation, "/actions", "a ReserveBandwidth action is required")
        }
        _ => {}
    }
}

fn check_activation(c: &mut Checker, v: &Value) {
    let Some(obj) = c.object(v, "/activation_mode") else { return };
    let Some(mode) = c.required(obj, "mode", "/activation_mode") else { return };
    let Some(mode) = c.string(mode, "/activation_mode/mode") else { return };
    match mode {
        "Immediate" => c.unknown_fields(obj, &["mode"], "/activation_mode"),
        "Canary" => {
            c.unknown_fields(obj, &["mode", "fraction"], "/activation_mode");
            if let Some(f) = c.required(obj, "fraction", "/activation_mode") {
                if let Some(x) = c.number(f, "/activation_mode/fraction") {
                    if !(x > 0.0 && x <= 1.0) {
                        c.push(
                            ViolationCode::RangeViolation,
                            "/activation_mode/fraction",
                            "canary fraction must be in (0, 1]",
                        );
                    }
                }
            }
        }
        other => c.push(ViolationCode::BadEnum, "/activation_mode/mode", format!("unknown activation mode {other}")),
    }
}
