use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use delaynet::delay::{format_trace, parse_trace, DelayBounds, DelayChannel};
use delaynet::linalg;
use delaynet::predictor::{artstein_oracle, compute_f, InputHistory, PowerTable};
use delaynet::sim::{dlqr, feedforward_gain, run_with, ControllerKind, Quartiles, Scenario, ScenarioConfig};
use delaynet::stability::hinf_norm_poly;
use delaynet::vehicle::{build_lateral_continuous, discretize_zoh, ContinuousLti, LateralParams};

fn matrix(rows: usize, cols: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(range, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn system(max_n: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1..=max_n).prop_flat_map(|n| (matrix(n, n, -1.5..1.5), matrix(n, 1, -1.0..1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn zoh_is_a_semigroup((a, b) in system(4), t in 0.01f64..0.2) {
        let n = a.nrows();
        let cont = ContinuousLti::new(a, b, DMatrix::zeros(n, 1)).unwrap();
        let c = DMatrix::identity(n, n);
        let full = discretize_zoh(&cont, &c, t).unwrap();
        let half = discretize_zoh(&cont, &c, t / 2.0).unwrap();
        let a2 = half.a() * half.a();
        let b2 = half.a() * half.b() + half.b();
        prop_assert!((full.a() - a2).amax() <= 1e-10 * full.a().amax().max(1.0));
        prop_assert!((full.b() - b2).amax() <= 1e-10 * full.b().amax().max(1.0));
    }

    #[test]
    fn dlqr_gain_is_stabilizing((a, b) in system(3), q in 0.1f64..5.0, r in 0.1f64..5.0) {
        let n = a.nrows();
        let ctrb = linalg::controllability_matrix(&a, &b);
        prop_assume!(ctrb.clone().svd(false, false).singular_values.min() > 1e-3);
        let k = dlqr(&a, &b, &(DMatrix::identity(n, n) * q), &DMatrix::from_element(1, 1, r)).unwrap();
        prop_assert!(linalg::spectral_radius(&(&a + &b * &k)) < 1.0);
    }

    #[test]
    fn quartiles_are_ordered_and_order_free(mut v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let q = Quartiles::of(&v).unwrap();
        prop_assert!(q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max);
        v.reverse();
        prop_assert_eq!(Quartiles::of(&v).unwrap(), q);
    }

    #[test]
    fn channel_delivers_in_bounds_and_in_order(lo in 0usize..6, span in 0usize..5, seed in any::<u64>()) {
        let hi = lo + span;
        let mut ch = DelayChannel::new(lo, hi, -1i64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..60i64 {
            ch.push(k, k).unwrap();
            let m = ch.sample_delayed(k, &mut rng).unwrap();
            let age = m.age_at(k);
            prop_assert!(age >= lo as i64 && age <= hi as i64);
            let expected = if m.origin_step < 0 { -1 } else { m.origin_step };
            prop_assert_eq!(m.value, expected);
        }
        let trace = ch.drawn_delays().to_vec();
        prop_assert_eq!(parse_trace(&format_trace(&trace)).unwrap(), trace);
    }

    #[test]
    fn transformed_state_is_delay_free(
        (a, b) in system(3),
        h in 0usize..5,
        u in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        prop_assume!(a.clone().svd(false, false).singular_values.min() > 0.2);
        let n = a.nrows();
        let powers = PowerTable::new(&a, h + 1).unwrap();
        let f = compute_f(&a, &b, h, h).unwrap();
        let input = |j: i64| if j < 0 { 0.0 } else { u[j as usize] };
        let history = |k: i64| {
            InputHistory::from_recent((1..=h.max(1) as i64).map(|j| DVector::from_element(1, input(k - j))).collect())
        };
        let mut x = DVector::from_element(n, 0.3);
        let mut z = artstein_oracle(&x, &history(0), h, h, &powers, &b).unwrap();
        for k in 0..(u.len() as i64 - 1) {
            x = &a * &x + &b * input(k - h as i64);
            let z_next = artstein_oracle(&x, &history(k + 1), h, h, &powers, &b).unwrap();
            let predicted = &a * &z + &f * input(k);
            prop_assert!((&z_next - &predicted).amax() <= 1e-9 * z_next.amax().max(1.0));
            z = z_next;
        }
    }

    #[test]
    fn hinf_grid_refinement_never_lowers_the_bound(
        coeffs in prop::collection::vec(-2.0f64..2.0, 1..6),
        grid in 8usize..200,
    ) {
        let terms: Vec<(usize, DMatrix<f64>)> =
            coeffs.iter().enumerate().map(|(p, c)| (p, DMatrix::from_element(1, 1, *c))).collect();
        let coarse = hinf_norm_poly(&terms, grid).unwrap();
        let fine = hinf_norm_poly(&terms, 2 * grid).unwrap();
        prop_assert!(fine >= coarse - 1e-12);
        prop_assert!(coarse >= coeffs.iter().sum::<f64>().abs() - 1e-12);
        prop_assert!(fine <= coeffs.iter().map(|c| c.abs()).sum::<f64>() + 1e-12);
    }

    #[test]
    fn feedforward_holds_the_offset_at_equilibrium(v in 1.0f64..30.0) {
        let p = LateralParams { v, ..LateralParams::simulation_vehicle() };
        let cont = build_lateral_continuous(&p).unwrap();
        let model = discretize_zoh(&cont, &DMatrix::identity(4, 4), 0.05).unwrap();
        let ff = feedforward_gain(&model, 3).unwrap();
        // Simulating a constant unit curvature with the feed-forward input
        // from the equilibrium must leave the offset unchanged.
        let lhs = model.a() - DMatrix::<f64>::identity(4, 4);
        let mut aug = DMatrix::zeros(4, 3);
        aug.columns_mut(0, 3).copy_from(&lhs.columns(0, 3));
        let rhs = -(model.p_r().column(0) + model.b() * &ff);
        let x_free = aug.svd(true, true).solve(&rhs, 1e-14).unwrap();
        let x = DVector::from_vec(vec![x_free[0], x_free[1], x_free[2], 0.0]);
        let next = model.step(&x, &ff, 1.0);
        prop_assert!((next[3] - x[3]).abs() <= 1e-9);
    }

    #[test]
    fn delay_bounds_reject_inverted_ranges(lo in 0usize..10, hi in 0usize..10) {
        let ok = DelayBounds::new((lo, hi), (0, 0)).is_ok();
        prop_assert_eq!(ok, lo <= hi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_deterministic_per_seed(seed in any::<u64>()) {
        let text = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scalar_stable.toml"),
        )
        .unwrap();
        let sc = Scenario::from_config(ScenarioConfig::from_toml(&text).unwrap()).unwrap();
        let a = run_with(&sc, ControllerKind::Proposed, seed, None).unwrap();
        let b = run_with(&sc, ControllerKind::Proposed, seed, None).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn config_survives_a_round_trip(seed in any::<u64>(), horizon in 20usize..500) {
        let text = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/lane_change.toml"),
        )
        .unwrap();
        let mut cfg = ScenarioConfig::from_toml(&text).unwrap();
        cfg.seed = seed;
        cfg.horizon = horizon;
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        prop_assert_eq!(back, cfg);
    }
}
