// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::ResourceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub cpu_capacity: f64,
    pub ram_capacity: f64,
    #[serde(default = "default_capacity")]
    pub storage_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub capacity_mbps: f64,
    pub base_latency_ms: f64,
}

impl Link {
    pub fn id(&self) -> ResourceId {
        ResourceId::link(&self.a, &self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub name: String,
    pub node: String,
    pub segment: String,
    pub cpu_demand: f64,
    pub ram_demand: f64,
    #[serde(default)]
    pub storage_demand: f64,
    pub traffic_demand_mbps: f64,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default = "default_base_latency")]
    pub base_latency_ms: f64,
    #[serde(default = "default_class")]
    pub traffic_class: String,
    /// Node the service's traffic leaves through; `None` keeps it local.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egress: Option<String>,
}

fn default_capacity() -> f64 {
    100.0
}

fn default_base_latency() -> f64 {
    5.0
}

fn default_class() -> String {
    "best-effort".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("duplicate {0} `{1}`")]
    Duplicate(&'static str, String),
    #[error("service `{service}` placed on unknown node `{node}`")]
    UnknownPlacement { service: String, node: String },
    #[error("link endpoint `{0}` does not exist")]
    UnknownEndpoint(String),
    #[error("service `{service}` depends on unknown service `{dep}`")]
    UnknownDependency { service: String, dep: String },
    #[error("dependency cycle through `{0}`")]
    DependencyCycle(String),
    #[error("`{0}` must be non-negative and finite")]
    BadQuantity(String),
}

/// Nodes, links and placed services. Immutable once handed out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub services: Vec<Service>,
    #[serde(default)]
    pub version: u64,
}

pub type TopologySnapshot = Topology;

impl Topology {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return Err(TopologyError::Duplicate("node", n.name.clone()));
            }
            for (what, q) in [
                ("cpu_capacity", n.cpu_capacity),
                ("ram_capacity", n.ram_capacity),
                ("storage_capacity", n.storage_capacity),
            ] {
                if !(q.is_finite() && q > 0.0) {
                    return Err(TopologyError::BadQuantity(format!("{}.{what}", n.name)));
                }
            }
        }
        let mut links = BTreeSet::new();
        for l in &self.links {
            for end in [&l.a, &l.b] {
                if !names.contains(end.as_str()) {
                    return Err(TopologyError::UnknownEndpoint(end.clone()));
                }
            }
            if !links.insert(l.id()) {
                return Err(TopologyError::Duplicate("link", l.id().to_string()));
            }
            if !(l.capacity_mbps.is_finite() && l.capacity_mbps > 0.0 && l.base_latency_ms >= 0.0) {
                return Err(TopologyError::BadQuantity(l.id().to_string()));
            }
        }
        let mut svc = BTreeSet::new();
        for s in &self.services {
            if !svc.insert(s.name.as_str()) {
                return Err(TopologyError::Duplicate("service", s.name.clone()));
            }
            if !names.contains(s.node.as_str()) {
                return Err(TopologyError::UnknownPlacement { service: s.name.clone(), node: s.node.clone() });
            }
            if let Some(e) = &s.egress {
                if !names.contains(e.as_str()) {
                    return Err(TopologyError::UnknownEndpoint(e.clone()));
                }
            }
            for (what, q) in [
                ("cpu_demand", s.cpu_demand),
                ("ram_demand", s.ram_demand),
                ("storage_demand", s.storage_demand),
                ("traffic_demand_mbps", s.traffic_demand_mbps),
                ("base_latency_ms", s.base_latency_ms),
            ] {
                if !(q.is_finite() && q >= 0.0) {
                    return Err(TopologyError::BadQuantity(format!("{}.{what}", s.name)));
                }
            }
        }
        for s in &self.services {
            for d in &s.depends_on {
                if !svc.contains(d.as_str()) {
                    return Err(TopologyError::UnknownDependency { service: s.name.clone(), dep: d.clone() });
                }
            }
        }
        self.dependency_order().map(|_| ())
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&Service> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn link(&self, a: &str, b: &str) -> Option<&Link> {
        let id = ResourceId::link(a, b);
        self.links.iter().find(|l| l.id() == id)
    }

    pub fn services_on<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Service> + 'a {
        self.services.iter().filter(move |s| s.node == node)
    }

    /// Every resource id in the topology.
    pub fn resources(&self) -> BTreeSet<ResourceId> {
        let mut out = BTreeSet::new();
        out.extend(self.nodes.iter().map(|n| ResourceId::node(&n.name)));
        out.extend(self.services.iter().map(|s| ResourceId::service(&s.name)));
        out.extend(self.links.iter().map(Link::id));
        out
    }

    pub fn has_resource(&self, id: &ResourceId) -> bool {
        self.resources().contains(id)
    }

    /// Services ordered so that every dependency precedes its dependents.
    pub fn dependency_order(&self) -> Result<Vec<&Service>, TopologyError> {
        let mut order = Vec::new();
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(
            topo: &'a Topology,
            name: &'a str,
            state: &mut BTreeMap<&'a str, u8>,
            order: &mut Vec<&'a Service>,
        ) -> Result<(), TopologyError> {
            match state.get(name) {
                Some(2) => return Ok(()),
                Some(1) => return Err(TopologyError::DependencyCycle(name.to_string())),
                _ => {}
            }
            state.insert(name, 1);
            let svc = topo.service(name).expect("validated dependency");
            for d in &svc.depends_on {
                visit(topo, d, state, order)?;
            }
            state.insert(name, 2);
            order.push(svc);
            Ok(())
        }
        for s in &self.services {
            visit(self, &s.name, &mut state, &mut order)?;
        }
        Ok(order)
    }

    fn neighbours(&self, node: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .links
            .iter()
            .filter_map(|l| {
                if l.a == node {
                    Some(l.b.as_str())
                } else if l.b == node {
                    Some(l.a.as_str())
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Fewest-hop path as a node sequence; ties go to the lexicographically
    /// smaller neighbour. `None` if unreachable.
    pub fn shortest_path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        if self.node(from).is_none() || self.node(to).is_none() {
            return None;
        }
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            if n == to {
                let mut path = vec![to.to_string()];
                let mut cur = to;
                while let Some(&p) = prev.get(cur) {
                    path.push(p.to_string());
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for m in self.neighbours(n) {
                if seen.insert(m) {
                    prev.insert(m, n);
                    queue.push_back(m);
                }
            }
        }
        None
    }

    /// All simple paths between two nodes, in discovery order.
    pub fn simple_paths(&self, from: &str, to: &str) -> Vec<Vec<String>> {
        fn dfs(topo: &Topology, cur: &str, to: &str, path: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
            if cur == to {
                out.push(path.clone());
                return;
            }
            for m in topo.neighbours(cur) {
                if !path.iter().any(|p| p == m) {
                    path.push(m.to_string());
                    dfs(topo, m, to, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        if self.node(from).is_some() && self.node(to).is_some() {
            dfs(self, from, to, &mut vec![from.to_string()], &mut out);
        }
        out
    }

    pub fn path_links(path: &[String]) -> Vec<ResourceId> {
        path.windows(2).map(|w| ResourceId::link(&w[0], &w[1])).collect()
    }

    /// Links a service's traffic crosses by default.
    pub fn service_path(&self, svc: &Service) -> Vec<String> {
        match &svc.egress {
            Some(e) if e != &svc.node => self.shortest_path(&svc.node, e).unwrap_or_else(|| vec![svc.node.clone()]),
            _ => vec![svc.node.clone()],
        }
    }
}
