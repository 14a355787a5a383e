//! Monte Carlo checks against simulated ground truth.

use std::sync::Mutex;
use std::time::Instant;

use covarcast_core::dcc::{composite_loglik_sequential, DccParams, PairScheme};
use covarcast_core::garch::{degarch_with_params, fit_garch, garch_loglik, GarchParams};
use covarcast_core::linalg::{self, Matrix};
use covarcast_core::market_data::{simulate_dcc_garch, SimulationSpec};
use covarcast_core::neural::{Network, NetworkConfig};
use covarcast_core::rng;

// One test at a time so the timing comparison is not skewed by its neighbours.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn single_asset(params: GarchParams, t: usize, seed: u64) -> Vec<f64> {
    let spec = SimulationSpec {
        n_assets: 1,
        n_days: t,
        garch: vec![params],
        dcc: DccParams { alpha: 0.0, beta: 0.0 },
        rbar: vec![1.0],
        seed,
    };
    simulate_dcc_garch(&spec).unwrap().returns.column(0)
}

const TRUE: GarchParams = GarchParams {
    omega: 0.05,
    alpha: 0.08,
    beta: 0.90,
};

#[test]
fn garch_error_shrinks_with_sample_size() {
    let _serial = serial();
    let errors = |t: usize| {
        let (a, b): (Vec<f64>, Vec<f64>) = (0..20)
            .map(|seed| {
                let f = fit_garch(&single_asset(TRUE, t, 1000 + seed)).unwrap();
                ((f.params.alpha - TRUE.alpha).abs(), (f.params.beta - TRUE.beta).abs())
            })
            .unzip();
        (median(a), median(b))
    };
    let small = errors(2000);
    let large = errors(20_000);
    assert!(large.0 < small.0, "alpha: {large:?} vs {small:?}");
    assert!(large.1 < small.1, "beta: {large:?} vs {small:?}");
}

/// Best log-likelihood over a (α, β) grid on the variance-targeting line.
fn grid_best(y: &[f64], var: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for ai in 0..=40 {
        for bi in 0..=99 {
            let (a, b) = (ai as f64 * 0.001, bi as f64 * 0.01);
            if a + b < 0.999 {
                let p = GarchParams { omega: var * (1.0 - a - b), alpha: a, beta: b };
                best = best.max(garch_loglik(y, &p, var));
            }
        }
    }
    best
}

#[test]
fn garch_on_iid_returns_reaches_the_global_optimum() {
    let _serial = serial();
    let mut low = 0;
    for seed in 0..20 {
        let mut r = rng::seeded(500 + seed);
        let y: Vec<f64> = (0..5000).map(|_| rng::standard_normal(&mut r)).collect();
        let f = fit_garch(&y).unwrap();
        let grid = grid_best(&y, f.sigma2_init);
        assert!(f.loglik >= grid - 1e-2, "seed {seed}: fit {} below grid {grid}", f.loglik);
        assert!(f.params.alpha < 0.1, "seed {seed}: α̂ = {}", f.params.alpha);
        if f.params.alpha + f.params.beta < 0.2 {
            low += 1;
        }
        // with α = 0 the likelihood is flat in β along ω = (1−β)·var
        let on_ridge = |b: f64| {
            let p = GarchParams { omega: f.sigma2_init * (1.0 - b), alpha: 0.0, beta: b };
            garch_loglik(&y, &p, f.sigma2_init)
        };
        assert!((on_ridge(0.0) - on_ridge(0.9)).abs() < 1e-6);
    }
    println!("i.i.d. returns: α̂+β̂ < 0.2 in {low}/20 seeds");
}

#[test]
fn injected_parameters_standardize_to_unit_variance() {
    let _serial = serial();
    let params = vec![TRUE, GarchParams { omega: 1e-5, alpha: 0.05, beta: 0.93 }];
    let spec = SimulationSpec {
        n_assets: 2,
        n_days: 5000,
        garch: params.clone(),
        dcc: DccParams { alpha: 0.03, beta: 0.95 },
        rbar: vec![1.0, 0.4, 0.4, 1.0],
        seed: 8,
    };
    let sim = simulate_dcc_garch(&spec).unwrap();
    let init: Vec<f64> = params.iter().map(|p| p.unconditional_variance().unwrap()).collect();
    let d = degarch_with_params(&sim.returns, &params, Some(&init)).unwrap();
    assert_eq!(d.std_residuals.shape(), (5000, 2));
    for i in 0..2 {
        let col = d.std_residuals.column(i);
        let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        assert!((var - 1.0).abs() < 0.1, "asset {i}: {var}");
    }
}

#[test]
fn long_simulation_matches_unconditional_covariance() {
    let _serial = serial();
    let omegas = [1e-4, 4e-4, 2.5e-5];
    let rbar = [1.0, 0.5, -0.2, 0.5, 1.0, 0.3, -0.2, 0.3, 1.0];
    let spec = SimulationSpec {
        n_assets: 3,
        n_days: 50_000,
        garch: omegas.iter().map(|&omega| GarchParams { omega, alpha: 0.0, beta: 0.0 }).collect(),
        dcc: DccParams { alpha: 0.0, beta: 0.0 },
        rbar: rbar.to_vec(),
        seed: 21,
    };
    let sim = simulate_dcc_garch(&spec).unwrap();
    let y = &sim.returns.returns;
    let t = y.nrows() as f64;
    let sample = y.transpose() * y / t;
    let truth = Matrix::from_fn(3, 3, |i, j| (omegas[i] * omegas[j]).sqrt() * rbar[3 * i + j]);
    let rel = linalg::frobenius(&(sample - &truth)) / linalg::frobenius(&truth);
    assert!(rel <= 0.05, "relative Frobenius distance {rel}");

    // with variance dynamics the diagonal still converges to ω/(1−α−β)
    let dynamic = SimulationSpec {
        garch: vec![TRUE, GarchParams { omega: 2e-6, alpha: 0.06, beta: 0.92 }, GarchParams { omega: 1e-5, alpha: 0.1, beta: 0.8 }],
        dcc: DccParams { alpha: 0.03, beta: 0.95 },
        ..spec
    };
    let sim = simulate_dcc_garch(&dynamic).unwrap();
    for (i, p) in dynamic.garch.iter().enumerate() {
        let col = sim.returns.returns.column(i);
        let var = col.iter().map(|v| v * v).sum::<f64>() / t;
        let target = p.unconditional_variance().unwrap();
        assert!((var / target - 1.0).abs() < 0.1, "asset {i}: {var} vs {target}");
    }
    assert!(sim.covariances.iter().all(|h| linalg::min_eigenvalue(h) > 0.0));
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let _serial = serial();
    let mut cfg = NetworkConfig::reference(2, 0, 4);
    cfg.lstm_hidden = 6;
    cfg.dense_widths = vec![5];
    let net = Network::new(cfg).unwrap();
    let seq = [0.3, 0.7, 0.1, 0.9, 0.5, 0.5];
    let clean = net.forward_train(&seq, None, None).unwrap();
    let base = clean.lstm.last_hidden().to_vec();
    let unit = (0..base.len()).max_by(|&a, &b| base[a].abs().total_cmp(&base[b].abs())).unwrap();
    let mut r = rng::seeded(99);
    let draws = 10_000;
    let mut lstm_sum = 0.0;
    let mut dense_sum = 0.0;
    for _ in 0..draws {
        let c = net.forward_train(&seq, None, Some(&mut r)).unwrap();
        lstm_sum += base[unit] * c.masks[0].as_ref().unwrap()[unit];
        dense_sum += c.masks[1].as_ref().unwrap()[0];
    }
    let lstm_mean = lstm_sum / draws as f64;
    assert!((lstm_mean / base[unit] - 1.0).abs() <= 0.02, "{lstm_mean} vs {}", base[unit]);
    assert!((dense_sum / draws as f64 - 1.0).abs() <= 0.02);
}

#[test]
fn contiguous_composite_cost_is_linear_in_assets() {
    let _serial = serial();
    let time = |n: usize| {
        let mut r = rng::seeded(n as u64);
        let s = Matrix::from_fn(10_000, n, |_, _| rng::standard_normal(&mut r));
        let rbar = Matrix::identity(n, n);
        let pairs = PairScheme::Contiguous.pairs(n).unwrap();
        let p = DccParams { alpha: 0.03, beta: 0.95 };
        (0..11)
            .map(|_| {
                let start = Instant::now();
                std::hint::black_box(composite_loglik_sequential(&s, &p, &rbar, &pairs).unwrap());
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let small = time(20);
    let large = time(40);
    assert!(large / small <= 2.5, "N=40 took {large:.2e}s vs {small:.2e}s at N=20");
}
