use std::path::PathBuf;

use nalgebra::DMatrix;

use delaynet::delay::format_trace;
use delaynet::linalg;
use delaynet::sim::{
    batch_runs, dlqr, run_closed_loop, run_with, trial_seeds, ControllerKind, ReferenceConfig, Scenario,
    ScenarioConfig, TruthModel, ZhatInit,
};

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name),
    )
    .unwrap()
}

/// Linear truth, no noise, no model uncertainty.
fn clean(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.truth = TruthModel::Linear;
    cfg.noise.std.clear();
    cfg.uncertainty.gamma = 0.0;
    cfg
}

fn exact_fixture(input: usize, output: usize) -> Scenario {
    let mut cfg = clean(load("lane_change.toml"));
    cfg.delays.input = [input, input];
    cfg.delays.output = [output, output];
    cfg.reference = ReferenceConfig::default();
    cfg.zhat_init = ZhatInit::Zero;
    cfg.initial_state = Some(vec![0.0, 0.0, 0.05, 0.5]);
    let mut sc = Scenario::from_config(cfg).unwrap();
    let n = sc.model.n();
    sc.l = Some(sc.model.a() - DMatrix::identity(n, n) * 0.5);
    sc
}

#[test]
fn zero_delay_lqr_reaches_the_reference() {
    let mut cfg = clean(load("zero_delay.toml"));
    cfg.controller = ControllerKind::Lqr;
    let log = run_closed_loop(&Scenario::from_config(cfg).unwrap()).unwrap();
    let last = log.records.last().unwrap();
    assert!(last.x[3].abs() < 0.01, "final offset {}", last.x[3]);
}

#[test]
fn delayed_lqr_degrades_on_some_seed() {
    let zero = Scenario::from_config(load("zero_delay.toml")).unwrap();
    let base = batch_runs(&zero, ControllerKind::Lqr, &trial_seeds(1, 20), None).unwrap();
    let delayed = Scenario::from_config(load("lane_change.toml")).unwrap();
    let runs = batch_runs(&delayed, ControllerKind::Lqr, &trial_seeds(1, 20), None).unwrap();
    let threshold = 5.0 * base.summary.rms_offset.median;
    assert!(runs
        .trials
        .iter()
        .any(|t| t.metrics.diverged || t.metrics.rms_offset > threshold));
}

#[test]
fn replayed_traces_are_byte_identical() {
    let sc = Scenario::from_config(load("lane_change.toml")).unwrap();
    let first = run_with(&sc, ControllerKind::Proposed, 9, None).unwrap();
    let second = run_with(&sc, ControllerKind::Lqr, 1234, Some(&first.traces())).unwrap();
    assert_eq!(format_trace(&first.input_delays), format_trace(&second.input_delays));
    assert_eq!(format_trace(&first.output_delays), format_trace(&second.output_delays));
}

#[test]
fn controllers_share_delays_for_a_seed() {
    let sc = Scenario::from_config(load("lane_change.toml")).unwrap();
    let a = run_with(&sc, ControllerKind::Proposed, 4, None).unwrap();
    let b = run_with(&sc, ControllerKind::Lqr, 4, None).unwrap();
    assert_eq!(a.traces(), b.traces());
}

#[test]
fn log_has_one_record_per_step_within_bounds() {
    let sc = Scenario::from_config(load("lane_change.toml")).unwrap();
    let log = run_closed_loop(&sc).unwrap();
    assert_eq!(log.records.len(), sc.config.horizon);
    assert!(log
        .records
        .iter()
        .all(|r| (3..=5).contains(&r.d_i) && (4..=7).contains(&r.d_o)));
    let csv = log.to_csv();
    assert_eq!(csv.lines().count(), sc.config.horizon + 1);
    assert!(csv.starts_with("k,t,beta,r,psi_L,y_L,u_applied,u_computed,d_O,d_I,zhat_1,"));
}

#[test]
fn single_trial_summary_is_the_trial() {
    let sc = Scenario::from_config(load("scalar_stable.toml")).unwrap();
    let batch = batch_runs(&sc, ControllerKind::Proposed, &[3], None).unwrap();
    let m = &batch.trials[0].metrics;
    let q = &batch.summary.rms_offset;
    assert_eq!(
        (q.min, q.q1, q.median, q.q3, q.max),
        (m.rms_offset, m.rms_offset, m.rms_offset, m.rms_offset, m.rms_offset)
    );
    assert_eq!(batch.summary.mean_abs_heading.median, m.mean_abs_heading);
}

#[test]
fn identical_seeds_have_no_spread() {
    let sc = Scenario::from_config(load("lane_change.toml")).unwrap();
    let batch = batch_runs(&sc, ControllerKind::Proposed, &[8, 8, 8, 8], None).unwrap();
    for q in [&batch.summary.mean_abs_offset, &batch.summary.rms_heading] {
        assert_eq!(q.min, q.max);
    }
}

#[test]
fn zero_delay_predictor_matches_static_feedback() {
    let mut cfg = clean(load("zero_delay.toml"));
    cfg.reference = ReferenceConfig::default();
    cfg.zhat_init = ZhatInit::Measurement;
    let sc = Scenario::from_config(cfg).unwrap();
    let proposed = run_with(&sc, ControllerKind::Proposed, 2, None).unwrap();
    let lqr = run_with(&sc, ControllerKind::Lqr, 2, None).unwrap();
    for (p, l) in proposed.records.iter().zip(&lqr.records).skip(20) {
        assert!((&p.u_computed - &l.u_computed).amax() <= 1e-8, "step {}", p.k);
    }
}

#[test]
fn arrival_prediction_matches_truth_for_constant_delays() {
    for (d_i, d_o) in [(0, 3), (2, 0), (3, 2), (5, 6)] {
        let sc = exact_fixture(d_i, d_o);
        let log = run_closed_loop(&sc).unwrap();
        for k in 150..sc.config.horizon - d_i {
            let pred = log.records[k].x_pred.as_ref().unwrap();
            let err = (pred - &log.records[k + d_i].x).amax();
            assert!(err <= 1e-8, "d_I={d_i} d_O={d_o} step {k}: {err:.2e}");
        }
    }
}

#[test]
fn larger_noise_does_not_reduce_error() {
    let mut base = load("lane_change.toml");
    base.truth = TruthModel::Linear;
    let rms = |scale: f64| -> Vec<f64> {
        let mut cfg = base.clone();
        cfg.noise.std = cfg.noise.std.iter().map(|s| s * scale).collect();
        let sc = Scenario::from_config(cfg).unwrap();
        let batch = batch_runs(&sc, ControllerKind::Proposed, &trial_seeds(100, 50), None).unwrap();
        batch.trials.iter().map(|t| t.metrics.rms_offset).collect()
    };
    let low = rms(1.0);
    let high = rms(4.0);
    let diffs: Vec<f64> = high.iter().zip(&low).map(|(h, l)| h - l).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
    let stderr = (var / diffs.len() as f64).sqrt();
    assert!(
        mean >= -2.0 * stderr,
        "mean change {mean:.4e}, standard error {stderr:.4e}"
    );
}

/// Policy iteration from a stabilizing gain.
fn policy_iteration(a: f64, b: f64, q: f64, r: f64, mut k: f64) -> f64 {
    for _ in 0..200 {
        let acl = a + b * k;
        let p = (q + k * k * r) / (1.0 - acl * acl);
        k = -(b * p * a) / (r + b * b * p);
    }
    k
}

#[test]
fn dlqr_matches_policy_iteration() {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    let k = dlqr(&s(1.0), &s(1.0), &s(1.0), &s(1.0)).unwrap()[(0, 0)];
    let oracle = policy_iteration(1.0, 1.0, 1.0, 1.0, -1.0);
    assert!((k - oracle).abs() <= 1e-9, "{k} vs {oracle}");
    let k = dlqr(&s(1.3), &s(0.4), &s(2.0), &s(0.5)).unwrap()[(0, 0)];
    let oracle = policy_iteration(1.3, 0.4, 2.0, 0.5, -3.0);
    assert!((k - oracle).abs() <= 1e-9, "{k} vs {oracle}");
}

#[test]
fn lqr_weights_give_a_stabilizing_gain_on_the_lateral_plant() {
    let mut cfg = clean(load("zero_delay.toml"));
    cfg.gains.preset = None;
    cfg.gains.lift_lqr_gain = false;
    cfg.gains.lqr_weights = Some(delaynet::sim::LqrWeights {
        q: vec![0.0, 0.0, 1.0, 1.0],
        r: vec![10.0],
    });
    cfg.controller = ControllerKind::Lqr;
    let sc = Scenario::from_config(cfg).unwrap();
    let k = sc.lqr_gain().unwrap();
    assert!(linalg::spectral_radius(&(sc.model.a() + sc.model.b() * &k)) < 1.0);
    let log = run_closed_loop(&sc).unwrap();
    assert!(!delaynet::sim::compute_metrics(&log).unwrap().diverged);
}
