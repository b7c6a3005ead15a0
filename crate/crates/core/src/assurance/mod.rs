// SPDX-License-Identifier: Apache-2.0

//! Drift detection, compliance, risk, lead time and root-cause labelling.

mod drift;
mod risk;

use std::collections::BTreeMap;
use std::io::Write;

use crate::config::AssuranceConfig;
use crate::telemetry::{KpiSample, SeriesKey};

pub use drift::{calibrate, drift_step, Baseline, DriftState, DriftTransition, InsufficientSamples};
pub use risk::{
    combine, disambiguate, estimate_lead_time, hazard, ls_slope, predict_risk, resource_components, threat_direction,
    verify_compliance, AssuranceVerdict, Attribution, Breach, Compliance, Disambiguated, VerdictLabel,
};

/// Per-series calibration and drift state, fed one sample at a time.
#[derive(Debug, Clone)]
pub struct DriftMonitor {
    cfg: AssuranceConfig,
    pending: BTreeMap<SeriesKey, Vec<f64>>,
    baselines: BTreeMap<SeriesKey, Baseline>,
    states: BTreeMap<SeriesKey, DriftState>,
}

impl DriftMonitor {
    pub fn new(cfg: AssuranceConfig) -> Self {
        DriftMonitor { cfg, pending: BTreeMap::new(), baselines: BTreeMap::new(), states: BTreeMap::new() }
    }

    /// The first `calibration_window` samples of a series calibrate it; drift
    /// scoring starts with the next one.
    pub fn observe(&mut self, s: &KpiSample) -> DriftTransition {
        let key = (s.resource_id.clone(), s.kpi);
        if let Some(b) = self.baselines.get(&key) {
            let state = self.states.get(&key).copied().unwrap_or_else(|| DriftState::seeded(b));
            let (next, tr) = drift_step(&state, s.value, s.tick, b, &self.cfg);
            self.states.insert(key, next);
            return tr;
        }
        let buf = self.pending.entry(key.clone()).or_default();
        buf.push(s.value);
        if buf.len() >= self.cfg.calibration_window {
            let b = calibrate(buf, self.cfg.calibration_window, self.cfg.sigma_floor, s.tick).expect("window filled");
            self.pending.remove(&key);
            self.states.insert(key.clone(), DriftState::seeded(&b));
            self.baselines.insert(key, b);
        }
        DriftTransition::None
    }

    pub fn states(&self) -> &BTreeMap<SeriesKey, DriftState> {
        &self.states
    }

    pub fn baselines(&self) -> &BTreeMap<SeriesKey, Baseline> {
        &self.baselines
    }

    pub fn config(&self) -> &AssuranceConfig {
        &self.cfg
    }

    /// Diagnostic dump: one row per calibrated series.
    pub fn write_diagnostics<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["resource_id", "kpi", "mu", "sigma", "ewma", "d", "consec"])?;
        for (key, b) in &self.baselines {
            let s = self.states.get(key).copied().unwrap_or_else(|| DriftState::seeded(b));
            w.write_record([
                key.0.as_str().to_string(),
                key.1.as_str().to_string(),
                b.mu.to_string(),
                b.sigma.to_string(),
                s.ewma.to_string(),
                s.d.to_string(),
                s.consec.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
