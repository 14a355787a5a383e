//! Fixed inputs shared by the benchmarks.

use covarcast_core::garch::GarchParams;
use covarcast_core::market_data::{simulate_dcc_garch, SimulationSpec};
use covarcast_core::neural::{Activation, NetworkConfig};
use covarcast_core::{rng, DccParams, Matrix};

/// One simulated GARCH(1,1) return series.
pub fn garch_series(t: usize, seed: u64) -> Vec<f64> {
    let spec = SimulationSpec {
        n_assets: 1,
        n_days: t,
        garch: vec![GarchParams { omega: 0.05, alpha: 0.08, beta: 0.90 }],
        dcc: DccParams { alpha: 0.0, beta: 0.0 },
        rbar: vec![1.0],
        seed,
    };
    simulate_dcc_garch(&spec).expect("valid spec").returns.column(0)
}

/// T×N standard normal draws.
pub fn gaussian(t: usize, n: usize, seed: u64) -> Matrix {
    let mut r = rng::seeded(seed);
    Matrix::from_fn(t, n, |_, _| rng::standard_normal(&mut r))
}

/// Equicorrelated target with off-diagonal `rho`.
pub fn equicorrelation(n: usize, rho: f64) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
}

pub fn network(hidden: usize, dense: &[usize], one_hot_width: usize) -> NetworkConfig {
    NetworkConfig {
        input_width: 3,
        lstm_hidden: hidden,
        dense_widths: dense.to_vec(),
        one_hot_width,
        lstm_dropout: 0.0,
        dense_dropout: 0.0,
        hidden_activation: Activation::Sigmoid,
        seed: 1,
    }
}
