// SPDX-License-Identifier: Apache-2.0

//! Discrete-tick simulated network domain.
//!
//! Noise is `N(0, (0.02 * baseline)^2)` drawn from a ChaCha8 stream seeded
//! with the run seed. One draw is consumed per emitted sample in
//! (resource, kpi) order whether or not that KPI is noisy, so the stream does
//! not depend on which policies are active.

mod fault;
pub mod model;
pub mod topology;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::intent_model::{Action, PolicyIr};
use crate::telemetry::{KpiKey, KpiSample, ResourceId, ResourceKind, SeriesKey};

pub use fault::{FaultKind, FaultScenario};
pub use model::{evaluate, Effect, Eval};
pub use topology::{Link, Node, Service, Topology, TopologyError, TopologySnapshot};

pub const NOISE_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown resource `{0}`")]
    UnknownResource(String),
    #[error("no alternate path for service `{0}`")]
    NoAlternatePath(String),
    #[error("invalid fault `{0}`: {1}")]
    BadFault(String, &'static str),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn noisy(kpi: KpiKey) -> bool {
    matches!(kpi, KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil | KpiKey::ApiLatency | KpiKey::SvcThroughput)
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub tick: u64,
    pub topology: Topology,
    pub effects: BTreeMap<String, Effect>,
    pub faults: Vec<FaultScenario>,
    pub backlog: BTreeMap<String, f64>,
    pub rng_seed: u64,
    pub noise: bool,
    rng: ChaCha8Rng,
    baselines: BTreeMap<SeriesKey, f64>,
}

impl SimState {
    pub fn new(topology: Topology, seed: u64, noise: bool) -> Result<Self, SimError> {
        topology.validate()?;
        let mut state = SimState {
            tick: 0,
            backlog: topology.services.iter().map(|s| (s.name.clone(), 0.0)).collect(),
            topology,
            effects: BTreeMap::new(),
            faults: Vec::new(),
            rng_seed: seed,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            baselines: BTreeMap::new(),
        };
        let ev = evaluate(&state, 0);
        state.baselines = state
            .series()
            .into_iter()
            .map(|key| {
                let v = ev.value(&key.0, key.1).unwrap_or(0.0);
                (key, v)
            })
            .collect();
        Ok(state)
    }

    /// Every emitted series, in emission order.
    pub fn series(&self) -> Vec<SeriesKey> {
        let mut out = Vec::new();
        for r in self.topology.resources() {
            for k in KpiKey::ALL {
                if k.emitted_by(r.kind()) {
                    out.push((r.clone(), k));
                }
            }
        }
        out
    }

    pub fn noise_sigma(&self, key: &SeriesKey) -> f64 {
        if noisy(key.1) {
            NOISE_FRACTION * self.baselines.get(key).copied().unwrap_or(0.0).abs()
        } else {
            0.0
        }
    }

    pub fn evaluate(&self) -> Eval {
        evaluate(self, self.tick)
    }

    /// Advances one tick and returns the samples for the tick just simulated.
    pub fn step(&mut self) -> Vec<KpiSample> {
        let t = self.tick;
        let ev = evaluate(self, t);
        let mut analytics = BTreeMap::new();
        for s in &self.topology.services {
            let arrivals = ev.svc_offered[&s.name];
            let q = self.backlog.entry(s.name.clone()).or_insert(0.0);
            let processed = (*q + arrivals).min(ev.svc_processing[&s.name]);
            *q = (*q + arrivals - processed).max(0.0);
            analytics.insert(s.name.clone(), processed);
        }
        let keys = self.series();
        let mut out = Vec::with_capacity(keys.len());
        for key in keys {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let (r, k) = &key;
            let base = match k {
                KpiKey::QueueBacklog => self.backlog[r.name()],
                KpiKey::AnalyticsThroughput => analytics[r.name()],
                _ => ev.value(r, *k).unwrap_or(0.0),
            };
            let mut value = base;
            if self.noise {
                value += z * self.noise_sigma(&key);
            }
            value = match k {
                KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil => value.clamp(0.0, 100.0),
                KpiKey::AvailabilityIdx => value.clamp(0.0, 1.0),
                KpiKey::SvcThroughput => value.clamp(0.0, ev.svc_throughput_cap[r.name()]),
                _ => value.max(0.0),
            };
            out.push(KpiSample { resource_id: r.clone(), kpi: *k, tick: t, value });
        }
        self.tick += 1;
        out
    }

    pub fn inject_fault(&mut self, fault: FaultScenario) -> Result<(), SimError> {
        if !self.topology.has_resource(&fault.target) {
            return Err(SimError::UnknownResource(fault.target.to_string()));
        }
        if !fault.kind.accepts(fault.target.kind()) {
            return Err(SimError::BadFault(fault.scenario_id, "target kind"));
        }
        if !(fault.ramp > 0.0 && fault.ramp.is_finite()) {
            return Err(SimError::BadFault(fault.scenario_id, "ramp must be positive"));
        }
        if !(fault.magnitude_cap > 0.0 && fault.magnitude_cap < 1.0) {
            return Err(SimError::BadFault(fault.scenario_id, "magnitude cap must be in (0,1)"));
        }
        self.faults.push(fault);
        Ok(())
    }

    /// Registers a policy's actions at the given strength. Re-applying the same
    /// id replaces the previous effect.
    pub fn apply_policy(&mut self, policy: &PolicyIr, strength: f64) -> Result<(), SimError> {
        let effect = self.resolve_effect(Some(policy.scope.clone()), &policy.actions, strength)?;
        self.effects.insert(policy.policy_id.clone(), effect);
        Ok(())
    }

    pub fn apply_action(&mut self, id: &str, action: &Action, strength: f64) -> Result<(), SimError> {
        if let Some(existing) = self.effects.get_mut(id) {
            existing.strength = strength;
            return Ok(());
        }
        let effect = self.resolve_effect(None, std::slice::from_ref(action), strength)?;
        self.effects.insert(id.to_string(), effect);
        Ok(())
    }

    pub fn set_strength(&mut self, id: &str, strength: f64) -> bool {
        match self.effects.get_mut(id) {
            Some(e) => {
                e.strength = strength;
                true
            }
            None => false,
        }
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.effects.remove(id).is_some()
    }

    /// Enforced strength of an effect, if present.
    pub fn governed_fraction(&self, id: &str) -> Option<f64> {
        self.effects.get(id).map(|e| e.strength)
    }

    fn resolve_effect(
        &self,
        scope: Option<crate::intent_model::Scope>,
        actions: &[Action],
        strength: f64,
    ) -> Result<Effect, SimError> {
        let ev = self.evaluate();
        let mut effect = Effect {
            strength,
            scope,
            actions: actions.to_vec(),
            scale_capacity: BTreeMap::new(),
            routes: BTreeMap::new(),
        };
        for a in actions {
            match a {
                Action::Scale { service, steps } => {
                    let d = *ev
                        .svc_cpu_demand
                        .get(service)
                        .ok_or_else(|| SimError::UnknownResource(format!("svc:{service}")))?;
                    effect.scale_capacity.insert(service.clone(), model::SCALE_STEP * *steps as f64 * d);
                }
                Action::Reroute { service } => {
                    let path = self.alternate_path(&ev, service)?;
                    effect.routes.insert(service.clone(), path);
                }
                Action::Throttle { service } if self.topology.service(service).is_none() => {
                    return Err(SimError::UnknownResource(format!("svc:{service}")));
                }
                _ => {}
            }
        }
        Ok(effect)
    }

    /// Least-utilized simple path other than the current one.
    pub fn alternate_path(&self, ev: &Eval, service: &str) -> Result<Vec<String>, SimError> {
        let svc = self.topology.service(service).ok_or_else(|| SimError::UnknownResource(format!("svc:{service}")))?;
        let current = &ev.svc_path[service];
        let Some(dest) = svc.egress.as_ref().filter(|e| *e != &svc.node) else {
            return Err(SimError::NoAlternatePath(service.to_string()));
        };
        let load = |path: &Vec<String>| {
            Topology::path_links(path)
                .iter()
                .map(|l| {
                    let (avail, used) = ev.link_load[l];
                    if avail > 0.0 {
                        used / avail
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max)
        };
        self.topology
            .simple_paths(&svc.node, dest)
            .into_iter()
            .filter(|p| p != current)
            .map(|p| (load(&p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p)
            .ok_or_else(|| SimError::NoAlternatePath(service.to_string()))
    }

    pub fn has_service(&self, name: &str) -> bool {
        self.topology.service(name).is_some()
    }

    pub fn resource_kind(id: &ResourceId) -> ResourceKind {
        id.kind()
    }
}

/// Functional form of [`SimState::step`].
pub fn tick(state: &SimState) -> (SimState, Vec<KpiSample>) {
    let mut next = state.clone();
    let samples = next.step();
    (next, samples)
}
