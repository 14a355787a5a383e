use covarcast_core::garch::{fit_garch, GarchFit, GarchParams};
use covarcast_core::hybrid::{build_hybrid_features, build_training_set, fit_scaler, HybridForecaster, ModelVariant};
use covarcast_core::market_data::{simulate_dcc_garch, volatility_proxy, ReturnPanel, SimulationSpec};
use covarcast_core::neural::{Activation, NetworkConfig, TrainingConfig};
use covarcast_core::{DccParams, Matrix};

fn two_level_panel(seed: u64) -> ReturnPanel {
    let spec = SimulationSpec {
        n_assets: 2,
        n_days: 1500,
        garch: vec![
            GarchParams { omega: 2e-6, alpha: 0.06, beta: 0.92 },
            GarchParams { omega: 1.8e-5, alpha: 0.06, beta: 0.92 },
        ],
        dcc: DccParams { alpha: 0.02, beta: 0.95 },
        rbar: vec![1.0, 0.3, 0.3, 1.0],
        seed,
    };
    simulate_dcc_garch(&spec).unwrap().returns
}

fn fits(panel: &ReturnPanel) -> Vec<GarchFit> {
    (0..panel.n_assets()).map(|i| fit_garch(&panel.column(i)).unwrap()).collect()
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        input_width: 1,
        lstm_hidden: 8,
        dense_widths: vec![8],
        one_hot_width: 0,
        lstm_dropout: 0.0,
        dense_dropout: 0.0,
        hidden_activation: Activation::Sigmoid,
        seed: 3,
    }
}

#[test]
fn one_hot_separates_assets_with_different_levels() {
    let panel = two_level_panel(11);
    let proxies = volatility_proxy(&panel);
    let cfg = TrainingConfig {
        epochs: 40,
        batch_size: 64,
        learning_rate: 5e-3,
        patience: 0,
        validation_fraction: 0.0,
        dropout: false,
        seed: 4,
        ..TrainingConfig::default()
    };
    let (f, _) = HybridForecaster::train(&proxies, &fits(&panel), ModelVariant::LSTM_DCC_OH, 10, small_net(), &cfg).unwrap();
    let seq = vec![0.2; 10];
    let low = f.network.predict(&seq, Some(&[1.0, 0.0])).unwrap();
    let high = f.network.predict(&seq, Some(&[0.0, 1.0])).unwrap();
    assert!(high > low + 0.02, "one-hot outputs {low} vs {high}");
}

#[test]
fn pooled_examples_do_not_depend_on_asset_order() {
    let spec = SimulationSpec::heterogeneous(4, 400, DccParams { alpha: 0.03, beta: 0.95 }, 9);
    let panel = simulate_dcc_garch(&spec).unwrap().returns;
    let order = [2, 0, 3, 1];
    let shuffled = ReturnPanel::new(
        panel.dates.clone(),
        order.iter().map(|&i| panel.assets[i].clone()).collect(),
        Matrix::from_fn(panel.n_days(), 4, |d, j| panel.returns[(d, order[j])]),
    )
    .unwrap();
    let pooled = |p: &ReturnPanel| {
        let proxies = volatility_proxy(p);
        let features = build_hybrid_features(&proxies, &fits(p), ModelVariant::G_LSTM_DCC).unwrap();
        let scaler = fit_scaler(&features, &proxies, features.n_days).unwrap();
        let set = build_training_set(&features, &proxies, &scaler, 7, ModelVariant::G_LSTM_DCC).unwrap();
        let mut keys: Vec<Vec<u64>> = (0..set.index.len())
            .map(|k| {
                let e = set.example(k);
                e.sequence.iter().chain([&e.target]).map(|v| v.to_bits()).collect()
            })
            .collect();
        keys.sort();
        keys
    };
    assert_eq!(pooled(&panel), pooled(&shuffled));
}

#[test]
fn saved_forecaster_predicts_identically() {
    let panel = two_level_panel(5).head(400);
    let proxies = volatility_proxy(&panel);
    let fits = fits(&panel);
    let cfg = TrainingConfig { epochs: 2, batch_size: 64, patience: 0, ..TrainingConfig::default() };
    let (f, _) = HybridForecaster::train(&proxies, &fits, ModelVariant::G_LSTM_DCC_OH, 5, small_net(), &cfg).unwrap();
    let json = serde_json::to_string(&f.to_document()).unwrap();
    let back = HybridForecaster::from_document(&serde_json::from_str(&json).unwrap()).unwrap();
    let features = build_hybrid_features(&proxies, &fits, ModelVariant::G_LSTM_DCC_OH).unwrap();
    let a = f.predict(&features).unwrap();
    let b = back.predict(&features).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|v| *v > 0.0));
}
