// SPDX-License-Identifier: Apache-2.0

//! Scenario documents and the headless runner.
//!
//! A scenario fixes the topology, the fault schedule, when each intent is
//! submitted and the loop configuration. Together with a seed it determines
//! the whole run, which is what crash recovery relies on: a restarted run
//! re-executes from tick 0 and checks itself against the surviving log.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::{AdapterScript, DomainAdapter, ScriptedAdapter, SimAdapter};
use crate::config::LoopConfig;
use crate::engine::{CommandError, Engine, EngineError, EngineParts};
use crate::events::{read_log, truncate_log, EventLog, LogError};
use crate::netsim::{FaultKind, FaultScenario, Node, Service, SimState, Topology};
use crate::realization::{ExternalTranslator, GrammarTranslator, ServiceEndpoint, Translator};
use crate::remediation::RuleComposer;
use crate::store::IntentStore;
use crate::telemetry::ResourceId;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const KPI_FILE: &str = "kpi.csv";
pub const STORE_FILE: &str = "store.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledIntent {
    pub at: u64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TranslatorChoice {
    #[default]
    Grammar,
    /// Chat-completion endpoint from `LOOPBENCH_LLM_*`.
    External,
}

fn default_ticks() -> u64 {
    600
}

fn default_seed() -> u64 {
    42
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub scenario_id: String,
    pub topology: Topology,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "yes")]
    pub noise: bool,
    #[serde(default)]
    pub intents: Vec<ScheduledIntent>,
    #[serde(default)]
    pub faults: Vec<FaultScenario>,
    /// Scripted adapter failures; absent means a well-behaved adapter.
    #[serde(default)]
    pub adapter: Option<AdapterScript>,
    #[serde(default)]
    pub translator: TranslatorChoice,
    #[serde(default)]
    pub config: LoopConfig,
}

#[derive(Debug, Error)]
#[error("{path}: {detail}")]
pub struct ScenarioError {
    /// JSON pointer into the document, or `/` for the whole document.
    pub path: String,
    pub detail: String,
}

impl ScenarioError {
    fn at(path: impl Into<String>, detail: impl ToString) -> Self {
        ScenarioError { path: path.into(), detail: detail.to_string() }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ScenarioDoc =
            serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::at(pointer(e.path()), e.inner()))?;
        doc.check()?;
        Ok(doc)
    }

    /// Reads a scenario file, or a built-in scenario by name.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if let Some(doc) = builtin(name_or_path) {
            return Ok(doc);
        }
        let text =
            fs::read_to_string(name_or_path).map_err(|e| ScenarioError::at("/", format!("{name_or_path}: {e}")))?;
        Self::parse(&text)
    }

    /// Checks what the types alone cannot.
    pub fn check(&self) -> Result<(), ScenarioError> {
        self.topology.validate().map_err(|e| ScenarioError::at("/topology", e))?;
        let mut probe =
            SimState::new(self.topology.clone(), 0, false).map_err(|e| ScenarioError::at("/topology", e))?;
        let calibration = self.config.assurance.calibration_window as u64;
        for (i, f) in self.faults.iter().enumerate() {
            if f.onset_tick < calibration {
                return Err(ScenarioError::at(
                    format!("/faults/{i}/onset_tick"),
                    format!("onset {} falls inside the {calibration}-tick calibration window", f.onset_tick),
                ));
            }
            probe.inject_fault(f.clone()).map_err(|e| ScenarioError::at(format!("/faults/{i}"), e))?;
        }
        for (i, intent) in self.intents.iter().enumerate() {
            if intent.text.trim().is_empty() {
                return Err(ScenarioError::at(format!("/intents/{i}/text"), "empty intent text"));
            }
        }
        if self.config.realization.max_attempts == 0 {
            return Err(ScenarioError::at("/config/realization/max_attempts", "must be at least 1"));
        }
        Ok(())
    }

    pub fn to_canonical(&self) -> String {
        crate::canonical::canonical(self)
    }

    /// An engine at tick 0 with the fault schedule registered.
    pub fn engine(&self, seed: u64, log: EventLog) -> Result<Engine, ScenarioError> {
        let mut sim =
            SimState::new(self.topology.clone(), seed, self.noise).map_err(|e| ScenarioError::at("/topology", e))?;
        for (i, f) in self.faults.iter().enumerate() {
            sim.inject_fault(f.clone()).map_err(|e| ScenarioError::at(format!("/faults/{i}"), e))?;
        }
        let adapter: Box<dyn DomainAdapter> = match &self.adapter {
            Some(script) => Box::new(ScriptedAdapter::new(script.clone())),
            None => Box::new(SimAdapter),
        };
        let translator: Box<dyn Translator> = match self.translator {
            TranslatorChoice::Grammar => Box::new(GrammarTranslator),
            TranslatorChoice::External => {
                let rc = &self.config.realization;
                let endpoint = ServiceEndpoint::from_env(std::time::Duration::from_secs(rc.request_timeout_secs))
                    .ok_or_else(|| ScenarioError::at("/translator", "LOOPBENCH_LLM_URL is not set"))?;
                Box::new(ExternalTranslator::new(endpoint, rc.temperature, rc.max_in_flight))
            }
        };
        let parts =
            EngineParts { config: self.config.clone(), sim, adapter, translator, composer: Box::new(RuleComposer) };
        Ok(Engine::new(parts, log))
    }

    /// Submits the intents due at the engine's current tick. Rejections are
    /// part of the run; only engine failures are errors.
    pub fn submit_due(&self, engine: &mut Engine) -> Result<(), EngineError> {
        let now = engine.tick();
        for i in self.intents.iter().filter(|i| i.at == now) {
            if let Err(CommandError::Engine(e)) = engine.submit_intent(&i.text) {
                return Err(e);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub ticks: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// Runs a scenario to completion. With an output directory the event log,
/// the KPI CSV and a final store snapshot are written there; an existing
/// event log in it is treated as the record of an interrupted run and
/// resumed.
pub fn run(doc: &ScenarioDoc, opts: &RunOptions) -> Result<Engine, RunError> {
    let ticks = opts.ticks.unwrap_or(doc.ticks);
    let seed = opts.seed.unwrap_or(doc.seed);
    let mut engine = match &opts.out_dir {
        None => doc.engine(seed, EventLog::in_memory())?,
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let events = dir.join(EVENTS_FILE);
            let (records, torn) = read_log(&events)?;
            if torn {
                truncate_log(&events, &records)?;
            }
            let mut engine = doc.engine(seed, EventLog::open(&events, records)?)?;
            engine.export_kpis(Box::new(BufWriter::new(File::create(dir.join(KPI_FILE))?)))?;
            engine
        }
    };
    for _ in 0..ticks {
        doc.submit_due(&mut engine)?;
        engine.step()?;
    }
    engine.flush()?;
    if let Some(dir) = &opts.out_dir {
        write_snapshot(&dir.join(STORE_FILE), engine.store())?;
    }
    Ok(engine)
}

pub fn write_snapshot(path: &Path, store: &IntentStore) -> std::io::Result<()> {
    let mut text = crate::canonical::canonical(store);
    text.push('\n');
    fs::write(path, text)
}

/// Rebuilds the store from an optional snapshot plus the log suffix after it.
/// A snapshot ahead of the log is ignored.
pub fn recover_store(dir: &Path) -> Result<IntentStore, RunError> {
    let (records, _) = read_log(&dir.join(EVENTS_FILE))?;
    let head = records.last().map_or(0, |r| r.seq);
    let snapshot: Option<IntentStore> = fs::read_to_string(dir.join(STORE_FILE))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(|s: &IntentStore| s.head <= head);
    let mut store = snapshot.unwrap_or_default();
    let from = store.head;
    for r in records.iter().filter(|r| r.seq > from) {
        store.apply(r);
    }
    Ok(store)
}

// ---- built-in scenarios -----------------------------------------------------

pub const BUILTIN: [&str; 3] = ["s1", "s2", "s-canary"];

pub fn builtin(name: &str) -> Option<ScenarioDoc> {
    match name {
        "s1" => Some(s1()),
        "s2" => Some(s2()),
        "s-canary" => Some(s_canary()),
        _ => None,
    }
}

fn node(name: &str, cpu: f64) -> Node {
    Node { name: name.into(), cpu_capacity: cpu, ram_capacity: 100.0, storage_capacity: 100.0 }
}

fn service(name: &str, node: &str, cpu: f64, base_ms: f64, mbps: f64, egress: Option<&str>) -> Service {
    Service {
        name: name.into(),
        node: node.into(),
        segment: "public".into(),
        cpu_demand: cpu,
        ram_demand: 10.0,
        storage_demand: 0.0,
        traffic_demand_mbps: mbps,
        depends_on: vec![],
        base_latency_ms: base_ms,
        traffic_class: "best-effort".into(),
        egress: egress.map(str::to_string),
    }
}

fn s1_topology() -> Topology {
    Topology {
        nodes: vec![node("n1", 100.0)],
        links: vec![],
        services: vec![
            service("checkout", "n1", 20.0, 10.0, 100.0, None),
            service("cart", "n1", 10.0, 8.0, 50.0, None),
        ],
        version: 1,
    }
}

/// Shared-node CPU saturation: runaway demand on checkout loads the node it
/// shares with cart, so both latency intents drift.
pub fn s1() -> ScenarioDoc {
    ScenarioDoc {
        scenario_id: "s1".into(),
        topology: s1_topology(),
        ticks: 600,
        seed: 42,
        noise: true,
        intents: vec![
            ScheduledIntent { at: 0, text: "guarantee latency below 28 ms for service checkout".into() },
            ScheduledIntent { at: 0, text: "guarantee latency below 23 ms for service cart".into() },
        ],
        faults: vec![FaultScenario {
            scenario_id: "s1-runaway".into(),
            kind: FaultKind::NodeCpuSaturation,
            target: ResourceId::service("checkout"),
            onset_tick: 200,
            ramp: 0.001,
            magnitude_cap: 0.6,
        }],
        adapter: None,
        translator: TranslatorChoice::Grammar,
        config: LoopConfig::default(),
    }
}

/// Link degradation on the path of one service out of two.
pub fn s2() -> ScenarioDoc {
    let link =
        |a: &str, b: &str| crate::netsim::Link { a: a.into(), b: b.into(), capacity_mbps: 100.0, base_latency_ms: 1.0 };
    ScenarioDoc {
        scenario_id: "s2".into(),
        topology: Topology {
            nodes: vec![node("n1", 100.0), node("n2", 100.0), node("n3", 100.0)],
            links: vec![link("n1", "n2"), link("n1", "n3"), link("n2", "n3")],
            services: vec![
                service("web", "n1", 20.0, 10.0, 80.0, Some("n2")),
                service("batch", "n3", 20.0, 10.0, 40.0, Some("n2")),
            ],
            version: 1,
        },
        ticks: 600,
        seed: 42,
        noise: true,
        intents: vec![
            ScheduledIntent { at: 0, text: "ensure throughput of service web at least 70 mbps".into() },
            ScheduledIntent { at: 0, text: "ensure throughput of service batch at least 35 mbps".into() },
        ],
        faults: vec![FaultScenario {
            scenario_id: "s2-degrade".into(),
            kind: FaultKind::LinkDegradation,
            target: ResourceId::link("n1", "n2"),
            onset_tick: 200,
            ramp: 0.002,
            magnitude_cap: 0.5,
        }],
        adapter: None,
        translator: TranslatorChoice::Grammar,
        config: LoopConfig::default(),
    }
}

/// A canary activated while its service is already degrading: the owning
/// intent goes at-risk inside the canary window and the canary is rolled
/// back.
pub fn s_canary() -> ScenarioDoc {
    let mut doc = s1();
    doc.scenario_id = "s-canary".into();
    doc.ticks = 400;
    doc.intents = vec![ScheduledIntent {
        at: 300,
        text: "guarantee latency below 28 ms for service checkout as canary 20 percent".into(),
    }];
    doc.config.remediation.enabled = false;
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_check() {
        for name in BUILTIN {
            let doc = builtin(name).unwrap();
            doc.check().unwrap();
            let back = ScenarioDoc::parse(&doc.to_canonical()).unwrap();
            assert_eq!(back, doc, "{name}");
        }
    }

    #[test]
    fn malformed_reports_path() {
        let mut v: serde_json::Value = serde_json::from_str(&s1().to_canonical()).unwrap();
        v["faults"][0]["ramp"] = "fast".into();
        let e = ScenarioDoc::parse(&v.to_string()).unwrap_err();
        assert_eq!(e.path, "/faults/0/ramp");

        let mut v: serde_json::Value = serde_json::from_str(&s1().to_canonical()).unwrap();
        v["faults"][0]["onset_tick"] = 50.into();
        assert_eq!(ScenarioDoc::parse(&v.to_string()).unwrap_err().path, "/faults/0/onset_tick");

        let e = ScenarioDoc::parse("{\"scenario_id\": 3}").unwrap_err();
        assert_eq!(e.path, "/scenario_id");
    }
}
