// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AssuranceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mu: f64,
    pub sigma: f64,
    pub calibrated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("calibration needs {needed} samples, got {got}")]
pub struct InsufficientSamples {
    pub needed: usize,
    pub got: usize,
}

/// Mean and sample standard deviation (n - 1) over the first `window` values.
pub fn calibrate(
    values: &[f64],
    window: usize,
    sigma_floor: f64,
    calibrated_at: u64,
) -> Result<Baseline, InsufficientSamples> {
    if values.len() < window || window < 2 {
        return Err(InsufficientSamples { needed: window.max(2), got: values.len() });
    }
    let xs = &values[..window];
    let n = window as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Baseline { mu, sigma: var.sqrt().max(sigma_floor), calibrated_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftState {
    pub ewma: f64,
    /// Signed score `(ewma - mu) / sigma`; `d` is its magnitude.
    pub score: f64,
    pub d: f64,
    pub consec: u32,
    /// Consecutive ticks with `d < theta_off` while flagged.
    pub calm: u32,
    pub flagged: bool,
    pub onset_tick: Option<u64>,
}

impl DriftState {
    pub fn seeded(baseline: &Baseline) -> Self {
        DriftState { ewma: baseline.mu, score: 0.0, d: 0.0, consec: 0, calm: 0, flagged: false, onset_tick: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftTransition {
    None,
    Flagged,
    Cleared,
}

pub fn drift_step(
    state: &DriftState,
    value: f64,
    tick: u64,
    baseline: &Baseline,
    cfg: &AssuranceConfig,
) -> (DriftState, DriftTransition) {
    let mut s = *state;
    s.ewma = cfg.alpha * value + (1.0 - cfg.alpha) * s.ewma;
    s.score = (s.ewma - baseline.mu) / baseline.sigma;
    s.d = s.score.abs();
    s.consec = if s.d >= cfg.theta_on { s.consec + 1 } else { 0 };
    let mut transition = DriftTransition::None;
    if s.flagged {
        s.calm = if s.d < cfg.theta_off { s.calm + 1 } else { 0 };
        if s.calm >= cfg.persistence {
            s.flagged = false;
            s.onset_tick = None;
            s.calm = 0;
            transition = DriftTransition::Cleared;
        }
    } else if s.consec >= cfg.persistence {
        s.flagged = true;
        s.onset_tick = Some(tick);
        s.calm = 0;
        transition = DriftTransition::Flagged;
    }
    (s, transition)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Baseline {
        Baseline { mu: 40.0, sigma: 1.0, calibrated_at: 119 }
    }

    #[test]
    fn constant_series_hits_sigma_floor() {
        let b = calibrate(&[40.0; 120], 120, 1e-6, 119).unwrap();
        assert_eq!(b.mu, 40.0);
        assert_eq!(b.sigma, 1e-6);
        assert_eq!(calibrate(&[40.0; 119], 120, 1e-6, 118), Err(InsufficientSamples { needed: 120, got: 119 }));
    }

    #[test]
    fn at_mean_never_flags() {
        let cfg = AssuranceConfig::default();
        let mut s = DriftState::seeded(&base());
        for t in 0..1000 {
            let (n, tr) = drift_step(&s, 40.0, t, &base(), &cfg);
            assert_eq!(tr, DriftTransition::None);
            s = n;
        }
        assert_eq!(s.d, 0.0);
    }

    #[test]
    fn flag_then_clear() {
        let cfg = AssuranceConfig::default();
        let mut s = DriftState::seeded(&base());
        let mut flagged_at = None;
        for t in 0..20 {
            let (n, tr) = drift_step(&s, 50.0, t, &base(), &cfg);
            if tr == DriftTransition::Flagged {
                flagged_at = Some(t);
            }
            s = n;
        }
        assert_eq!(flagged_at, Some(4));
        assert_eq!(s.onset_tick, Some(4));
        let mut cleared = None;
        for t in 20..80 {
            let (n, tr) = drift_step(&s, 40.0, t, &base(), &cfg);
            if tr == DriftTransition::Cleared {
                cleared = Some(t);
            }
            s = n;
        }
        assert!(cleared.is_some());
        assert!(!s.flagged && s.onset_tick.is_none());
    }
}
