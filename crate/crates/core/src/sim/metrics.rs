use serde::Serialize;

use super::log::SimulationLog;
use crate::error::{Error, Result};

pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Tracking errors. The plant states are already errors relative to the
/// path, so no reference is subtracted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub mean_abs_offset: f64,
    pub mean_abs_heading: f64,
    pub rms_offset: f64,
    pub rms_heading: f64,
    pub diverged: bool,
    /// First step with a state entry above the threshold (or non-finite).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_step: Option<usize>,
    /// Records the statistics were taken over.
    pub steps: usize,
}

/// Means and RMS over the pre-divergence prefix of the log.
pub fn compute_metrics(log: &SimulationLog) -> Result<Metrics> {
    if log.records.is_empty() {
        return Err(Error::InvalidParameter("cannot compute metrics of an empty log".into()));
    }
    let divergence_step = log
        .records
        .iter()
        .position(|r| r.x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD));
    let prefix = &log.records[..divergence_step.unwrap_or(log.records.len())];
    let stats = |idx: usize| -> (f64, f64) {
        if prefix.is_empty() {
            return (f64::INFINITY, f64::INFINITY);
        }
        let count = prefix.len() as f64;
        let mean = prefix.iter().map(|r| r.x[idx].abs()).sum::<f64>() / count;
        let rms = (prefix.iter().map(|r| r.x[idx] * r.x[idx]).sum::<f64>() / count).sqrt();
        (mean, rms)
    };
    let (mean_abs_offset, rms_offset) = stats(log.meta.offset_index);
    let (mean_abs_heading, rms_heading) = stats(log.meta.heading_index);
    Ok(Metrics {
        mean_abs_offset,
        mean_abs_heading,
        rms_offset,
        rms_heading,
        diverged: divergence_step.is_some(),
        divergence_step,
        steps: prefix.len(),
    })
}

/// Five-number summary; quartiles by linear interpolation between order
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub trials: usize,
    pub diverged: usize,
    pub mean_abs_offset: Quartiles,
    pub mean_abs_heading: Quartiles,
    pub rms_offset: Quartiles,
    pub rms_heading: Quartiles,
}

pub fn summarize(trials: &[Metrics]) -> Option<MetricsSummary> {
    let pick = |f: fn(&Metrics) -> f64| Quartiles::of(&trials.iter().map(f).collect::<Vec<_>>());
    Some(MetricsSummary {
        trials: trials.len(),
        diverged: trials.iter().filter(|m| m.diverged).count(),
        mean_abs_offset: pick(|m| m.mean_abs_offset)?,
        mean_abs_heading: pick(|m| m.mean_abs_heading)?,
        rms_offset: pick(|m| m.rms_offset)?,
        rms_heading: pick(|m| m.rms_heading)?,
    })
}
