// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which way a KPI goes when things get worse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Badness {
    High,
    Low,
}

impl Badness {
    /// +1 when larger values are worse, -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Badness::High => 1.0,
            Badness::Low => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResourceKind {
    Node,
    Service,
    Link,
}

/// The closed KPI catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiKey {
    CpuUtil,
    RamUtil,
    StorageUtil,
    SvcThroughput,
    AvailabilityIdx,
    ApiLatency,
    QueueBacklog,
    AnalyticsThroughput,
}

impl KpiKey {
    pub const ALL: [KpiKey; 8] = [
        KpiKey::CpuUtil,
        KpiKey::RamUtil,
        KpiKey::StorageUtil,
        KpiKey::SvcThroughput,
        KpiKey::AvailabilityIdx,
        KpiKey::ApiLatency,
        KpiKey::QueueBacklog,
        KpiKey::AnalyticsThroughput,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KpiKey::CpuUtil => "cpu_util",
            KpiKey::RamUtil => "ram_util",
            KpiKey::StorageUtil => "storage_util",
            KpiKey::SvcThroughput => "svc_throughput",
            KpiKey::AvailabilityIdx => "availability_idx",
            KpiKey::ApiLatency => "api_latency",
            KpiKey::QueueBacklog => "queue_backlog",
            KpiKey::AnalyticsThroughput => "analytics_throughput",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil => "%",
            KpiKey::SvcThroughput => "mbps",
            KpiKey::AvailabilityIdx => "index",
            KpiKey::ApiLatency => "ms",
            KpiKey::QueueBacklog => "count",
            KpiKey::AnalyticsThroughput => "items/s",
        }
    }

    pub fn badness(self) -> Badness {
        match self {
            KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil | KpiKey::ApiLatency | KpiKey::QueueBacklog => {
                Badness::High
            }
            KpiKey::SvcThroughput | KpiKey::AvailabilityIdx | KpiKey::AnalyticsThroughput => Badness::Low,
        }
    }

    /// Upper bound of the KPI's value range, if it has one.
    pub fn max_value(self) -> Option<f64> {
        match self {
            KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil => Some(100.0),
            KpiKey::AvailabilityIdx => Some(1.0),
            _ => None,
        }
    }

    pub fn is_utilization(self) -> bool {
        matches!(self, KpiKey::CpuUtil | KpiKey::RamUtil | KpiKey::StorageUtil)
    }

    /// Whether resources of `kind` report this KPI.
    pub fn emitted_by(self, kind: ResourceKind) -> bool {
        match kind {
            ResourceKind::Node => self.is_utilization(),
            ResourceKind::Service => !matches!(self, KpiKey::StorageUtil),
            ResourceKind::Link => false,
        }
    }

    /// KPIs whose drift in their bad direction precedes a violation of this
    /// one. In the simulated domain host CPU pressure inflates latency,
    /// drains availability and grows queues.
    pub fn precursors(self) -> &'static [KpiKey] {
        match self {
            KpiKey::ApiLatency | KpiKey::AvailabilityIdx | KpiKey::QueueBacklog | KpiKey::AnalyticsThroughput => {
                &[KpiKey::CpuUtil]
            }
            _ => &[],
        }
    }
}

impl fmt::Display for KpiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown kpi `{0}`")]
pub struct UnknownKpi(pub String);

impl FromStr for KpiKey {
    type Err = UnknownKpi;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KpiKey::ALL.iter().copied().find(|k| k.as_str() == s).ok_or_else(|| UnknownKpi(s.to_string()))
    }
}

/// Resource identifier: `node:<name>`, `svc:<name>` or `link:<a>-<b>` with
/// link endpoints in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(String);

impl ResourceId {
    pub fn node(name: &str) -> Self {
        Self(format!("node:{name}"))
    }

    pub fn service(name: &str) -> Self {
        Self(format!("svc:{name}"))
    }

    pub fn link(a: &str, b: &str) -> Self {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        Self(format!("link:{x}-{y}"))
    }

    pub fn parse(raw: &str) -> Option<Self> {
        let (prefix, rest) = raw.split_once(':')?;
        if rest.is_empty() || !matches!(prefix, "node" | "svc" | "link") {
            return None;
        }
        Some(Self(raw.to_string()))
    }

    pub fn kind(&self) -> ResourceKind {
        if self.0.starts_with("node:") {
            ResourceKind::Node
        } else if self.0.starts_with("svc:") {
            ResourceKind::Service
        } else {
            ResourceKind::Link
        }
    }

    /// The part after the `kind:` prefix.
    pub fn name(&self) -> &str {
        self.0.split_once(':').map(|(_, n)| n).unwrap_or(&self.0)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One telemetry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub resource_id: ResourceId,
    pub kpi: KpiKey,
    pub tick: u64,
    pub value: f64,
}

pub type SeriesKey = (ResourceId, KpiKey);
