//! Percepts: data-source taxonomy, windowed feature vectors and a z-score
//! anomaly detector over them.
//!
//! Everything here works on [`ObservedEvent`], which has no ground-truth
//! field, so nothing the agent perceives can leak `truth_malicious`.

use serde::{Deserialize, Serialize};

use crate::world::{EventKind, ObservedEvent};

/// Variance floor used by [`anomaly_score`].
pub const VARIANCE_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSourceCategory {
    NetworkTraffic,
    EventLogs,
    HardwareSensor,
    OsSensor,
    HighLevelInput,
}

pub fn categorize_event(kind: &EventKind) -> DataSourceCategory {
    use DataSourceCategory::*;
    match kind {
        EventKind::IdsAlert { .. } => EventLogs,
        EventKind::AntiMalwareAlert => EventLogs,
        EventKind::LogLine => EventLogs,
        EventKind::UnauthorizedAccess => OsSensor,
        EventKind::FileIntegrityViolation => OsSensor,
        EventKind::DummyFileAccess => OsSensor,
        EventKind::DummyProcessAlert => OsSensor,
        EventKind::HoneyTouch => NetworkTraffic,
        EventKind::LoadSample { .. } => HardwareSensor,
        EventKind::OperatorReply => HighLevelInput,
    }
}

pub const FEATURE_COUNT: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "ids_alert_count",
    "ids_severity_sum",
    "antimalware_alerts",
    "unauthorized_accesses",
    "honey_touches",
    "dummy_process_alerts",
    "integrity_violations",
    "system_load",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub ids_alert_count: u64,
    pub ids_severity_sum: u64,
    pub antimalware_alerts: u64,
    pub unauthorized_accesses: u64,
    /// Honeypot touches plus decoy-file accesses.
    pub honey_touches: u64,
    pub dummy_process_alerts: u64,
    pub integrity_violations: u64,
    /// Mean of the load samples in the window, 0 when there are none.
    pub system_load: f64,
    pub load_samples: u64,
    pub window_ticks: u64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.ids_alert_count as f64,
            self.ids_severity_sum as f64,
            self.antimalware_alerts as f64,
            self.unauthorized_accesses as f64,
            self.honey_touches as f64,
            self.dummy_process_alerts as f64,
            self.integrity_violations as f64,
            self.system_load,
        ]
    }

    /// Combine two vectors collected over disjoint tick ranges.
    pub fn merge(&self, other: &FeatureVector) -> FeatureVector {
        let load_samples = self.load_samples + other.load_samples;
        let system_load = if load_samples == 0 {
            0.0
        } else {
            (self.system_load * self.load_samples as f64 + other.system_load * other.load_samples as f64)
                / load_samples as f64
        };
        FeatureVector {
            ids_alert_count: self.ids_alert_count + other.ids_alert_count,
            ids_severity_sum: self.ids_severity_sum + other.ids_severity_sum,
            antimalware_alerts: self.antimalware_alerts + other.antimalware_alerts,
            unauthorized_accesses: self.unauthorized_accesses + other.unauthorized_accesses,
            honey_touches: self.honey_touches + other.honey_touches,
            dummy_process_alerts: self.dummy_process_alerts + other.dummy_process_alerts,
            integrity_violations: self.integrity_violations + other.integrity_violations,
            system_load,
            load_samples,
            window_ticks: self.window_ticks + other.window_ticks,
        }
    }
}

pub fn collect<'a, I>(events: I, window: u64) -> FeatureVector
where
    I: IntoIterator<Item = &'a ObservedEvent>,
{
    let mut fv = FeatureVector { window_ticks: window, ..Default::default() };
    let mut load_sum = 0.0;
    for e in events {
        match e.kind {
            EventKind::IdsAlert { severity } => {
                fv.ids_alert_count += 1;
                fv.ids_severity_sum += severity as u64;
            }
            EventKind::AntiMalwareAlert => fv.antimalware_alerts += 1,
            EventKind::UnauthorizedAccess => fv.unauthorized_accesses += 1,
            EventKind::HoneyTouch | EventKind::DummyFileAccess => fv.honey_touches += 1,
            EventKind::DummyProcessAlert => fv.dummy_process_alerts += 1,
            EventKind::FileIntegrityViolation => fv.integrity_violations += 1,
            EventKind::LoadSample { load } => {
                load_sum += load;
                fv.load_samples += 1;
            }
            EventKind::LogLine | EventKind::OperatorReply => {}
        }
    }
    if fv.load_samples > 0 {
        fv.system_load = load_sum / fv.load_samples as f64;
    }
    fv
}

/// Running per-feature mean and population variance (Welford).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean: [f64; FEATURE_COUNT],
    m2: [f64; FEATURE_COUNT],
    pub sample_count: u64,
}

impl Baseline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variance(&self) -> [f64; FEATURE_COUNT] {
        let mut v = [0.0; FEATURE_COUNT];
        if self.sample_count > 0 {
            for (out, m2) in v.iter_mut().zip(self.m2) {
                *out = (m2 / self.sample_count as f64).max(0.0);
            }
        }
        v
    }

    pub fn update(&mut self, fv: &FeatureVector) {
        self.sample_count += 1;
        let n = self.sample_count as f64;
        for (i, x) in fv.as_array().into_iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }
}

pub fn update_baseline(mut baseline: Baseline, fv: &FeatureVector) -> Baseline {
    baseline.update(fv);
    baseline
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SensingError {
    #[error("baseline has {0} samples, need at least 2")]
    InsufficientBaseline(u64),
}

pub fn anomaly_score(baseline: &Baseline, fv: &FeatureVector) -> Result<f64, SensingError> {
    if baseline.sample_count < 2 {
        return Err(SensingError::InsufficientBaseline(baseline.sample_count));
    }
    let var = baseline.variance();
    let score = fv
        .as_array()
        .iter()
        .zip(baseline.mean.iter().zip(var.iter()))
        .map(|(x, (m, v))| (x - m).abs() / (v + VARIANCE_EPSILON).sqrt())
        .fold(0.0, f64::max);
    Ok(score)
}
