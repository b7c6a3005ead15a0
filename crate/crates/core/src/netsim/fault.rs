// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::telemetry::{ResourceId, ResourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    /// On a node: capacity shrinks by the intensity. On a service: runaway
    /// demand of `intensity * host capacity` is added to the service.
    NodeCpuSaturation,
    LinkDegradation,
    /// Leaked memory of `intensity * ram capacity` on the target.
    MemoryLeak,
}

impl FaultKind {
    pub fn accepts(self, kind: ResourceKind) -> bool {
        match self {
            FaultKind::NodeCpuSaturation | FaultKind::MemoryLeak => {
                matches!(kind, ResourceKind::Node | ResourceKind::Service)
            }
            FaultKind::LinkDegradation => kind == ResourceKind::Link,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub scenario_id: String,
    pub kind: FaultKind,
    pub target: ResourceId,
    pub onset_tick: u64,
    pub ramp: f64,
    pub magnitude_cap: f64,
}

impl FaultScenario {
    /// `min(cap, ramp * max(0, t - onset))`.
    pub fn intensity(&self, tick: u64) -> f64 {
        let elapsed = tick.saturating_sub(self.onset_tick) as f64;
        (self.ramp * elapsed).min(self.magnitude_cap)
    }
}
