// SPDX-License-Identifier: Apache-2.0

//! Tunables for every stage of the loop, gathered in one place.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RealizationConfig {
    pub max_attempts: u32,
    pub temperature: f64,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for RealizationConfig {
    fn default() -> Self {
        Self { max_attempts: 3, temperature: 0.0, request_timeout_secs: 30, max_in_flight: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivationConfig {
    pub probe_window: u64,
    pub canary_window: u64,
    pub remove_retries: u32,
}

impl Default for ActivationConfig {
    fn default() -> Self {
        Self { probe_window: 5, canary_window: 30, remove_retries: 3 }
    }
}

/// Drift, risk and lead-time thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssuranceConfig {
    /// EWMA smoothing factor.
    pub alpha: f64,
    /// Drift score at which a tick counts toward a flag.
    pub theta_on: f64,
    /// Drift score at which the hazard saturates at 1.
    pub theta_sat: f64,
    /// Drift score below which a tick counts toward clearing a flag.
    pub theta_off: f64,
    /// Consecutive ticks needed to raise or clear a flag.
    pub persistence: u32,
    pub calibration_window: usize,
    pub sigma_floor: f64,
    pub slope_window: usize,
    pub horizon: u64,
    pub risk_gate: f64,
}

impl Default for AssuranceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            theta_on: 2.0,
            theta_sat: 6.0,
            theta_off: 1.0,
            persistence: 5,
            calibration_window: 120,
            sigma_floor: 1e-6,
            slope_window: 30,
            horizon: 60,
            risk_gate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionRiskTable {
    pub throttle: f64,
    pub scale: f64,
    pub reroute: f64,
    pub suspend: f64,
    pub reserve_bandwidth: f64,
    pub retry_apply: f64,
}

impl Default for ActionRiskTable {
    fn default() -> Self {
        Self { throttle: 0.2, scale: 0.3, reroute: 0.5, suspend: 0.7, reserve_bandwidth: 0.4, retry_apply: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemediationConfig {
    pub enabled: bool,
    /// When set, the loop approves operator-gated plans on the operator's behalf.
    pub auto_approve: bool,
    pub lambda: f64,
    pub settle_window: u64,
    /// Extra ticks added to the settle window to form the per-intent cooldown.
    pub cooldown_margin: u64,
    pub improvement_threshold: f64,
    pub critical_kpis: usize,
    pub max_context_bytes: usize,
    pub action_risk: ActionRiskTable,
}

impl Default for RemediationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            auto_approve: true,
            lambda: 0.5,
            settle_window: 20,
            cooldown_margin: 10,
            improvement_threshold: 0.1,
            critical_kpis: 10,
            max_context_bytes: 16 * 1024,
            action_risk: ActionRiskTable::default(),
        }
    }
}

impl RemediationConfig {
    pub fn cooldown(&self) -> u64 {
        self.settle_window + self.cooldown_margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TelemetryConfig {
    pub retention: usize,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self { retention: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub realization: RealizationConfig,
    pub activation: ActivationConfig,
    pub assurance: AssuranceConfig,
    pub remediation: RemediationConfig,
    pub telemetry: TelemetryConfig,
}
