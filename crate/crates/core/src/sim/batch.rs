use rayon::prelude::*;

use super::config::{ControllerKind, Scenario};
use super::engine::{run_with, DelayTraces};
use super::metrics::{compute_metrics, summarize, Metrics, MetricsSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub traces: DelayTraces,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub controller: ControllerKind,
    pub trials: Vec<TrialResult>,
    pub summary: MetricsSummary,
}

/// Seeds `seed, seed + 1, ...` for `n_trials` trials.
pub fn trial_seeds(seed: u64, n_trials: usize) -> Vec<u64> {
    (0..n_trials as u64).map(|i| seed.wrapping_add(i)).collect()
}

/// Independent trials of one controller, run in parallel and returned in
/// seed order. `replay[i]`, when given, fixes the delays of trial `i`.
pub fn batch_runs(
    sc: &Scenario,
    controller: ControllerKind,
    seeds: &[u64],
    replay: Option<&[DelayTraces]>,
) -> Result<BatchResult> {
    if seeds.is_empty() {
        return Err(Error::Config("a batch needs at least one trial".into()));
    }
    if let Some(r) = replay {
        if r.len() < seeds.len() {
            return Err(Error::Config(format!(
                "{} replayed traces for {} trials",
                r.len(),
                seeds.len()
            )));
        }
    }
    let trials = seeds
        .par_iter()
        .enumerate()
        .map(|(trial, &seed)| {
            let log = run_with(sc, controller, seed, replay.map(|r| &r[trial]))?;
            Ok(TrialResult {
                trial,
                seed,
                metrics: compute_metrics(&log)?,
                traces: log.traces(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<Metrics> = trials.iter().map(|t| t.metrics.clone()).collect();
    let summary = summarize(&metrics).expect("non-empty batch");
    Ok(BatchResult {
        controller,
        trials,
        summary,
    })
}
