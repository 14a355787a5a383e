use covarcast_core::dcc::{dcc_filter, DccParams};
use covarcast_core::garch::{garch_filter, GarchParams};
use covarcast_core::hybrid::ScalerState;
use covarcast_core::linalg::{self, Matrix};
use covarcast_core::market_data::{to_log_returns, ReturnPanel};
use covarcast_core::neural::{lstm_forward, Activation, Network, NetworkConfig};
use covarcast_core::portfolio::{
    long_only_kkt_holds, solve_min_variance, solve_min_variance_long_only, variance,
};
use covarcast_core::backtest::compute_metrics;
use proptest::prelude::*;

fn pd_matrix(n: usize) -> impl Strategy<Value = Matrix> {
    (prop::collection::vec(-1.0f64..1.0, n * n), 0.05f64..1.0).prop_map(move |(v, ridge)| {
        let a = Matrix::from_vec(n, n, v);
        let mut h = &a * a.transpose() + Matrix::identity(n, n) * ridge;
        linalg::symmetrize(&mut h);
        h
    })
}

fn garch_params() -> impl Strategy<Value = GarchParams> {
    (1e-8f64..1.0, 0.0f64..0.5, 0.0f64..0.5).prop_map(|(omega, a, b)| GarchParams {
        omega,
        alpha: a,
        beta: b.min(0.999 - a),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_returns_round_trip(rows in 2usize..40, cols in 1usize..5, seed in any::<u64>()) {
        let mut r = covarcast_core::rng::seeded(seed);
        let y = Matrix::from_fn(rows, cols, |_, _| 0.03 * covarcast_core::rng::standard_normal(&mut r));
        let panel = ReturnPanel::new(
            (0..rows).map(|d| format!("{d}")).collect(),
            (0..cols).map(|i| format!("A{i}")).collect(),
            y.clone(),
        ).unwrap();
        let back = to_log_returns(&panel.to_prices(100.0)).unwrap();
        for (a, b) in back.returns.iter().zip(y.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-2));
        }
    }

    #[test]
    fn variance_path_is_positive(p in garch_params(), y in prop::collection::vec(-50.0f64..50.0, 1..200), init in 1e-6f64..10.0) {
        let path = garch_filter(&y, &p, init);
        prop_assert_eq!(path.len(), y.len());
        prop_assert!(path.iter().all(|s| *s > 0.0 && s.is_finite()));
    }

    #[test]
    fn correlation_paths_are_valid(seed in any::<u64>(), a in 0.0f64..0.2, b in 0.0f64..0.79, n in 2usize..6) {
        let mut r = covarcast_core::rng::seeded(seed);
        let s = Matrix::from_fn(60, n, |_, _| 2.0 * covarcast_core::rng::standard_normal(&mut r));
        let rbar = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.3 });
        let out = dcc_filter(&s, &DccParams { alpha: a, beta: b }, &rbar, true).unwrap();
        for rt in out.r_path.unwrap() {
            for i in 0..n {
                prop_assert_eq!(rt[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert_eq!(rt[(i, j)], rt[(j, i)]);
                    prop_assert!(rt[(i, j)].abs() <= 1.0);
                }
            }
            prop_assert!(linalg::min_eigenvalue(&rt) >= -1e-10);
        }
    }

    #[test]
    fn normalization_ignores_scale(h in pd_matrix(4), c in 1e-3f64..1e3) {
        let a = linalg::normalize_correlation(&h);
        let b = linalg::normalize_correlation(&(h.clone() * c));
        prop_assert!((a - b).abs().max() <= 1e-14);
    }

    #[test]
    fn mvp_is_feasible_and_optimal(h in pd_matrix(5)) {
        let w = solve_min_variance(&h).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let hw = &h * covarcast_core::Vector::from_column_slice(&w);
        let inf = hw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(hw.iter().all(|v| (v - hw[0]).abs() <= 1e-8 * inf));
    }

    #[test]
    fn mvp_is_scale_invariant(h in pd_matrix(5), c in 1e-3f64..1e3) {
        let a = solve_min_variance(&h).unwrap();
        let b = solve_min_variance(&(h * c)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn long_only_satisfies_kkt(h in pd_matrix(6)) {
        let s = solve_min_variance_long_only(&h).unwrap();
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(s.weights.iter().all(|w| *w >= -1e-12));
        prop_assert!(long_only_kkt_holds(&h, &s.weights));
        let un = solve_min_variance(&h).unwrap();
        prop_assert!(variance(&h, &s.weights) >= variance(&h, &un) - 1e-14);
    }

    #[test]
    fn scaler_round_trips(lo in -5.0f64..5.0, width in 1e-3f64..10.0, x in -20.0f64..20.0) {
        let s = ScalerState { feature_min: vec![lo], feature_max: vec![lo + width], target_min: lo, target_max: lo + width };
        prop_assert!((s.unscale_target(s.scale_target(x)) - x).abs() <= 1e-12 * x.abs().max(1.0) * (1.0 + 1.0 / width));
        prop_assert!((s.scale_feature(0, lo) - 0.05).abs() <= 1e-15);
        prop_assert!((s.scale_feature(0, lo + width) - 0.95).abs() <= 1e-12);
    }

    #[test]
    fn gates_stay_in_range(seed in any::<u64>(), tau in 1usize..8, width in 1usize..4, hidden in 1usize..8) {
        let net = Network::new(NetworkConfig {
            input_width: width,
            lstm_hidden: hidden,
            dense_widths: vec![3],
            one_hot_width: 0,
            lstm_dropout: 0.0,
            dense_dropout: 0.0,
            hidden_activation: Activation::Sigmoid,
            seed,
        }).unwrap();
        // inputs span well beyond the scaled [0.05, 0.95] band
        let mut r = covarcast_core::rng::seeded(seed ^ 1);
        let seq: Vec<f64> = (0..tau * width).map(|_| 2.0 * covarcast_core::rng::standard_normal(&mut r)).collect();
        let zeros = vec![0.0; hidden];
        let trace = lstm_forward(&net.lstm, &seq, &zeros, &zeros).unwrap();
        for k in 0..tau {
            for g in [&trace.update_gate[k], &trace.forget_gate[k], &trace.output_gate[k]] {
                prop_assert!(g.iter().all(|v| *v > 0.0 && *v < 1.0));
            }
            prop_assert!(trace.candidate[k].iter().all(|v| *v > -1.0 && *v < 1.0));
        }
        let p = net.predict(&seq, None).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn truncation_only_changes_later_states(seed in any::<u64>(), tau in 2usize..8) {
        let net = Network::new(NetworkConfig::reference(2, 0, seed)).unwrap();
        let mut r = covarcast_core::rng::seeded(seed);
        let seq: Vec<f64> = (0..tau * 2).map(|_| covarcast_core::rng::standard_normal(&mut r)).collect();
        let mut other = seq.clone();
        other[(tau - 1) * 2] += 1.0;
        let h = net.config.lstm_hidden;
        let zeros = vec![0.0; h];
        let a = lstm_forward(&net.lstm, &seq, &zeros, &zeros).unwrap();
        let b = lstm_forward(&net.lstm, &other, &zeros, &zeros).unwrap();
        prop_assert_eq!(&a.a_path[..tau - 1], &b.a_path[..tau - 1]);
        prop_assert_eq!(&a.c_path[..tau - 1], &b.c_path[..tau - 1]);
        prop_assert!(a.a_path[tau - 1] != b.a_path[tau - 1]);
        let short = lstm_forward(&net.lstm, &seq[..(tau - 1) * 2], &zeros, &zeros).unwrap();
        prop_assert_eq!(&short.a_path[..], &a.a_path[..tau - 1]);
    }

    #[test]
    fn metrics_follow_definitions(x in prop::collection::vec(-0.05f64..0.05, 2..300)) {
        let m = compute_metrics(&x).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        prop_assert!((m.av - 252.0 * mean).abs() <= 1e-12);
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((m.sd - (252.0 * var).sqrt()).abs() <= 1e-12);
        if let Some(ir) = m.ir {
            prop_assert!(m.sd > 0.0);
            prop_assert_eq!(ir, m.av / m.sd);
        }
    }
}
