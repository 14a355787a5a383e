//! Scalar DCC with correlation targeting, estimated by maximum composite
//! likelihood over asset pairs.
//!
//! Q_t = (1 − α − β)·R̄ + α·s_{t-1}s'_{t-1} + β·Q_{t-1},   Q_0 = R̄
//! R_t = Diag(Q_t)^{-1/2} Q_t Diag(Q_t)^{-1/2}
//!
//! The likelihoods are evaluated on standardized residuals, so the first-stage
//! volatilities are held fixed and each pair's conditional covariance is its
//! 2×2 correlation block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::optim::{self, OptimOptions};
use crate::rng;

const PERSISTENCE_CAP: f64 = 1.0 - 1e-6;
const CORR_CLAMP: f64 = 1.0 - 1e-10;
/// Largest N accepted by [`full_mle_loglik`].
pub const FULL_MLE_MAX_ASSETS: usize = 25;
/// Largest N for which the all-pairs scheme is offered.
pub const ALL_PAIRS_MAX_ASSETS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DccParams {
    pub alpha: f64,
    pub beta: f64,
}

impl DccParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta < 1.0) {
            return Err(Error::Constraint(format!(
                "DCC needs alpha, beta ≥ 0 and alpha + beta < 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairScheme {
    /// (0,1), (1,2), …, (N−2, N−1)
    #[default]
    Contiguous,
    /// Contiguous pairs over a seeded permutation of the assets.
    ShuffledContiguous { seed: u64 },
    /// Every pair; only for N ≤ 60.
    All,
}

impl PairScheme {
    pub fn pairs(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        match *self {
            PairScheme::Contiguous => Ok((1..n).map(|i| (i - 1, i)).collect()),
            PairScheme::ShuffledContiguous { seed } => {
                let mut order: Vec<usize> = (0..n).collect();
                rng::shuffle(&mut order, &mut rng::seeded(seed));
                Ok(order.windows(2).map(|w| (w[0], w[1])).collect())
            }
            PairScheme::All => {
                if n > ALL_PAIRS_MAX_ASSETS {
                    return Err(Error::InvalidInput(format!(
                        "all-pairs composite likelihood is limited to N ≤ {ALL_PAIRS_MAX_ASSETS}"
                    )));
                }
                Ok((0..n)
                    .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DccFit {
    pub params: DccParams,
    pub rbar: Matrix,
    /// Q at the last in-sample day.
    pub q_last: Matrix,
    pub composite_loglik: f64,
    pub pair_scheme: Vec<(usize, usize)>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccFitSummary {
    pub alpha: f64,
    pub beta: f64,
    pub composite_loglik: f64,
    pub pair_scheme: Vec<(usize, usize)>,
    pub converged: bool,
}

impl DccFit {
    pub fn summary(&self) -> DccFitSummary {
        DccFitSummary {
            alpha: self.params.alpha,
            beta: self.params.beta,
            composite_loglik: self.composite_loglik,
            pair_scheme: self.pair_scheme.clone(),
            converged: self.converged,
        }
    }

    /// R for the day after the sample, given the last standardized residuals.
    pub fn forecast_correlation_one_step(&self, s_last: &[f64]) -> Matrix {
        one_step_correlation(&self.q_last, &self.rbar, s_last, &self.params)
    }
}

/// Output of [`dcc_filter`]; the paths are present only when requested.
#[derive(Debug, Clone)]
pub struct DccFilterOutput {
    pub q_path: Option<Vec<Matrix>>,
    pub r_path: Option<Vec<Matrix>>,
    pub q_last: Matrix,
    pub r_last: Matrix,
}

fn next_q(q: &Matrix, rbar: &Matrix, s: &[f64], p: &DccParams) -> Matrix {
    let n = q.nrows();
    let w = 1.0 - p.alpha - p.beta;
    Matrix::from_fn(n, n, |i, j| w * rbar[(i, j)] + p.alpha * s[i] * s[j] + p.beta * q[(i, j)])
}

/// R_{T+1} from Q_T and the standardized residuals of day T.
pub fn one_step_correlation(q_last: &Matrix, rbar: &Matrix, s_last: &[f64], params: &DccParams) -> Matrix {
    linalg::normalize_correlation(&next_q(q_last, rbar, s_last, params))
}

/// Runs the Q recursion over all T rows of `s`.
pub fn dcc_filter(s: &Matrix, params: &DccParams, rbar: &Matrix, keep_paths: bool) -> Result<DccFilterOutput> {
    let (t, n) = s.shape();
    if rbar.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "target is {:?}, residuals have {n} columns",
            rbar.shape()
        )));
    }
    params.validate()?;
    let mut q = rbar.clone();
    let mut q_path = keep_paths.then(|| Vec::with_capacity(t));
    let mut r_path = keep_paths.then(|| Vec::with_capacity(t));
    let mut row = vec![0.0; n];
    for day in 0..t {
        if day > 0 {
            for (i, v) in row.iter_mut().enumerate() {
                *v = s[(day - 1, i)];
            }
            q = next_q(&q, rbar, &row, params);
        }
        if let (Some(qp), Some(rp)) = (q_path.as_mut(), r_path.as_mut()) {
            qp.push(q.clone());
            rp.push(linalg::normalize_correlation(&q));
        }
    }
    let r_last = linalg::normalize_correlation(&q);
    Ok(DccFilterOutput {
        q_path,
        r_path,
        q_last: q,
        r_last,
    })
}

/// Bivariate log-likelihood of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoglik {
    pub value: f64,
    /// Set when a conditional correlation had to be clamped away from ±1.
    pub clamped: bool,
}

/// −½ Σ_t [log det R_t + s_t' R_t^{-1} s_t] for one pair, with closed-form
/// 2×2 determinant and inverse. `rbar_pair` is [r11, r12, r22].
pub fn pair_loglik(s1: &[f64], s2: &[f64], params: &DccParams, rbar_pair: [f64; 3]) -> PairLoglik {
    let w = 1.0 - params.alpha - params.beta;
    let (a, b) = (params.alpha, params.beta);
    let [r11, r12, r22] = rbar_pair;
    let (mut q11, mut q12, mut q22) = (r11, r12, r22);
    let mut total = 0.0;
    let mut clamped = false;
    for t in 0..s1.len() {
        if t > 0 {
            let (x, y) = (s1[t - 1], s2[t - 1]);
            q11 = w * r11 + a * x * x + b * q11;
            q12 = w * r12 + a * x * y + b * q12;
            q22 = w * r22 + a * y * y + b * q22;
        }
        let mut rho = q12 / (q11 * q22).sqrt();
        if rho.abs() > CORR_CLAMP {
            rho = rho.signum() * CORR_CLAMP;
            clamped = true;
        }
        let det = 1.0 - rho * rho;
        let (x, y) = (s1[t], s2[t]);
        let quad = (x * x - 2.0 * rho * x * y + y * y) / det;
        total += det.ln() + quad;
    }
    PairLoglik {
        value: -0.5 * total,
        clamped,
    }
}

fn column(s: &Matrix, i: usize) -> &[f64] {
    let t = s.nrows();
    &s.as_slice()[i * t..(i + 1) * t]
}

fn validate_pairs(pairs: &[(usize, usize)], n: usize) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("empty pair list".into()));
    }
    if let Some(p) = pairs.iter().find(|(i, j)| *i >= n || *j >= n || i == j) {
        return Err(Error::InvalidInput(format!("invalid pair {p:?} for N = {n}")));
    }
    Ok(())
}

/// Mean of [`pair_loglik`] over `pairs`. Pairs are evaluated in parallel and
/// reduced in list order.
pub fn composite_loglik(s: &Matrix, params: &DccParams, rbar: &Matrix, pairs: &[(usize, usize)]) -> Result<f64> {
    validate_pairs(pairs, s.ncols())?;
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            pair_loglik(
                column(s, i),
                column(s, j),
                params,
                [rbar[(i, i)], rbar[(i, j)], rbar[(j, j)]],
            )
            .value
        })
        .collect();
    Ok(values.iter().sum::<f64>() / pairs.len() as f64)
}

/// Sequential reference for [`composite_loglik`].
pub fn composite_loglik_sequential(
    s: &Matrix,
    params: &DccParams,
    rbar: &Matrix,
    pairs: &[(usize, usize)],
) -> Result<f64> {
    validate_pairs(pairs, s.ncols())?;
    let total: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            pair_loglik(
                column(s, i),
                column(s, j),
                params,
                [rbar[(i, i)], rbar[(i, j)], rbar[(j, j)]],
            )
            .value
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// Exact full-dimensional Gaussian log-likelihood of standardized residuals
/// (no 2π constant). Restricted to N ≤ 25.
pub fn full_mle_loglik(s: &Matrix, params: &DccParams, rbar: &Matrix) -> Result<f64> {
    let (t, n) = s.shape();
    if n > FULL_MLE_MAX_ASSETS {
        return Err(Error::InvalidInput(format!(
            "full likelihood is limited to N ≤ {FULL_MLE_MAX_ASSETS}; use composite_loglik for N = {n}"
        )));
    }
    params.validate()?;
    let mut q = rbar.clone();
    let mut total = 0.0;
    for day in 0..t {
        let prev: Vec<f64> = if day > 0 {
            s.row(day - 1).iter().copied().collect()
        } else {
            Vec::new()
        };
        if day > 0 {
            q = next_q(&q, rbar, &prev, params);
        }
        let r = linalg::normalize_correlation(&q);
        let chol = r.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let log_det: f64 = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        let x = s.row(day).transpose();
        let solved = chol.solve(&x);
        total += log_det + x.dot(&solved);
    }
    Ok(-0.5 * total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DccOptions {
    pub scheme: PairScheme,
    pub max_iterations: usize,
}

impl Default for DccOptions {
    fn default() -> Self {
        Self {
            scheme: PairScheme::Contiguous,
            max_iterations: 500,
        }
    }
}

fn params_from_unconstrained(u: &[f64]) -> DccParams {
    let (alpha, beta) = optim::simplex_from_unconstrained(u, PERSISTENCE_CAP);
    DccParams { alpha, beta }
}

/// Maximum composite likelihood fit from α = 0.02, β = 0.95.
pub fn fit_dcc(s: &Matrix, rbar: &Matrix, options: &DccOptions) -> Result<DccFit> {
    let (t, n) = s.shape();
    if t <= 10 {
        return Err(Error::InvalidInput(format!("DCC fit needs T > 10, got {t}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput("DCC fit needs at least two assets".into()));
    }
    if rbar.shape() != (n, n) {
        return Err(Error::Dimension(format!("target is {:?} for N = {n}", rbar.shape())));
    }
    if (0..n).any(|i| (rbar[(i, i)] - 1.0).abs() > 1e-10) || linalg::max_asymmetry(rbar) > 1e-10 {
        return Err(Error::InvalidInput("target must be a symmetric unit-diagonal matrix".into()));
    }
    let pairs = options.scheme.pairs(n)?;
    let scale = t as f64;
    let objective = |u: &[f64]| {
        let p = params_from_unconstrained(u);
        composite_loglik_sequential(s, &p, rbar, &pairs).map_or(f64::INFINITY, |v| -v / scale)
    };
    let value_grad = |u: &[f64]| (objective(u), optim::numeric_gradient(&objective, u, 1e-6));
    let start = optim::simplex_to_unconstrained(0.02, 0.95, PERSISTENCE_CAP);
    let opts = OptimOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: 1e-6,
    };
    let result = optim::minimize(objective, value_grad, &start, &opts);
    let params = params_from_unconstrained(&result.x);
    if !result.converged {
        log::warn!(
            "DCC fit did not converge after {} iterations; keeping best point {:?}",
            result.iterations,
            params
        );
    }
    let filtered = dcc_filter(s, &params, rbar, false)?;
    Ok(DccFit {
        params,
        rbar: rbar.clone(),
        q_last: filtered.q_last,
        composite_loglik: -result.value * scale,
        pair_scheme: pairs,
        converged: result.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{simulate_dcc_garch, SimulationSpec};

    fn gaussian(t: usize, n: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::from_fn(t, n, |_, _| rng::standard_normal(&mut r))
    }

    fn target(n: usize, rho: f64) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn filter_collapses_to_target() {
        let s = gaussian(50, 3, 1);
        let rbar = target(3, 0.3);
        let out = dcc_filter(&s, &DccParams { alpha: 0.0, beta: 0.0 }, &rbar, true).unwrap();
        for r in out.r_path.unwrap() {
            assert!((r - &rbar).abs().max() < 1e-15);
        }
    }

    #[test]
    fn single_asset_correlation_is_one() {
        let s = gaussian(30, 1, 2);
        let out = dcc_filter(&s, &DccParams { alpha: 0.1, beta: 0.8 }, &Matrix::identity(1, 1), true).unwrap();
        assert!(out.r_path.unwrap().iter().all(|r| r[(0, 0)] == 1.0));
    }

    #[test]
    fn filter_reproduces_simulated_correlations() {
        let dcc = DccParams { alpha: 0.05, beta: 0.9 };
        let spec = SimulationSpec::heterogeneous(4, 400, dcc, 17);
        let sim = simulate_dcc_garch(&spec).unwrap();
        let out = dcc_filter(&sim.std_residuals, &dcc, &spec.rbar_matrix(), true).unwrap();
        for (a, b) in out.r_path.unwrap().iter().zip(&sim.correlations) {
            assert!((a - b).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn pair_loglik_closed_forms() {
        let zeros = vec![0.0; 20];
        let p0 = DccParams { alpha: 0.0, beta: 0.0 };
        assert_eq!(pair_loglik(&zeros, &zeros, &p0, [1.0, 0.0, 1.0]).value, 0.0);
        let s = gaussian(40, 2, 3);
        let (x, y) = (column(&s, 0), column(&s, 1));
        let expected = -0.5 * x.iter().zip(y).map(|(a, b)| a * a + b * b).sum::<f64>();
        assert!((pair_loglik(x, y, &p0, [1.0, 0.0, 1.0]).value - expected).abs() < 1e-12);
    }

    #[test]
    fn pair_loglik_matches_generic_linear_algebra() {
        let s = gaussian(60, 2, 4);
        let p = DccParams { alpha: 0.07, beta: 0.88 };
        let rbar = target(2, -0.35);
        let out = dcc_filter(&s, &p, &rbar, true).unwrap();
        let mut brute = 0.0;
        for (t, r) in out.r_path.unwrap().iter().enumerate() {
            let lu = r.clone().lu();
            let inv = r.clone().try_inverse().unwrap();
            let x = s.row(t).transpose();
            brute += lu.determinant().ln() + (x.transpose() * inv * &x)[(0, 0)];
        }
        brute *= -0.5;
        let fast = pair_loglik(column(&s, 0), column(&s, 1), &p, [1.0, -0.35, 1.0]).value;
        assert!((fast - brute).abs() < 1e-9 * brute.abs());
    }

    #[test]
    fn composite_definitions() {
        let s = gaussian(80, 3, 5);
        let p = DccParams { alpha: 0.04, beta: 0.9 };
        let rbar = target(3, 0.2);
        let s2 = s.columns(0, 2).into_owned();
        let r2 = target(2, 0.2);
        let single = pair_loglik(column(&s, 0), column(&s, 1), &p, [1.0, 0.2, 1.0]).value;
        assert_eq!(composite_loglik(&s2, &p, &r2, &[(0, 1)]).unwrap(), single);
        let pairs = PairScheme::Contiguous.pairs(3).unwrap();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        let other = pair_loglik(column(&s, 1), column(&s, 2), &p, [1.0, 0.2, 1.0]).value;
        let cl = composite_loglik(&s, &p, &rbar, &pairs).unwrap();
        assert!((cl - 0.5 * (single + other)).abs() < 1e-12);
        let doubled: Vec<_> = pairs.iter().chain(&pairs).copied().collect();
        assert!((composite_loglik(&s, &p, &rbar, &doubled).unwrap() - cl).abs() < 1e-12);
        assert!(composite_loglik(&s, &p, &rbar, &[]).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let s = gaussian(300, 30, 6);
        let rbar = target(30, 0.1);
        let p = DccParams { alpha: 0.03, beta: 0.95 };
        let pairs = PairScheme::All.pairs(30).unwrap();
        let a = composite_loglik(&s, &p, &rbar, &pairs).unwrap();
        let b = composite_loglik_sequential(&s, &p, &rbar, &pairs).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn full_mle_cases() {
        let s = gaussian(70, 2, 7);
        let p = DccParams { alpha: 0.05, beta: 0.9 };
        let rbar = target(2, 0.4);
        let full = full_mle_loglik(&s, &p, &rbar).unwrap();
        let cl = composite_loglik(&s, &p, &rbar, &[(0, 1)]).unwrap();
        assert!((full - cl).abs() < 1e-10 * full.abs().max(1.0));
        let s1 = gaussian(30, 1, 8);
        let expect = -0.5 * s1.iter().map(|v| v * v).sum::<f64>();
        assert!((full_mle_loglik(&s1, &p, &Matrix::identity(1, 1)).unwrap() - expect).abs() < 1e-12);
        assert!(full_mle_loglik(&gaussian(5, 26, 9), &p, &Matrix::identity(26, 26)).is_err());
    }

    #[test]
    fn full_mle_matches_naive_five_assets() {
        let s = gaussian(40, 5, 10);
        let p = DccParams { alpha: 0.06, beta: 0.85 };
        let rbar = target(5, 0.25);
        let out = dcc_filter(&s, &p, &rbar, true).unwrap();
        let mut naive = 0.0;
        for (t, r) in out.r_path.unwrap().iter().enumerate() {
            let x = s.row(t).transpose();
            naive += r.determinant().ln() + (x.transpose() * r.clone().try_inverse().unwrap() * &x)[(0, 0)];
        }
        naive *= -0.5;
        let v = full_mle_loglik(&s, &p, &rbar).unwrap();
        assert!((v - naive).abs() < 1e-9 * naive.abs());
    }

    #[test]
    fn forecast_cases() {
        let s = gaussian(100, 3, 11);
        let rbar = target(3, 0.3);
        let p = DccParams { alpha: 0.05, beta: 0.9 };
        let out = dcc_filter(&s, &p, &rbar, false).unwrap();
        let fit = DccFit {
            params: p,
            rbar: rbar.clone(),
            q_last: out.q_last.clone(),
            composite_loglik: 0.0,
            pair_scheme: vec![(0, 1), (1, 2)],
            converged: true,
        };
        let last: Vec<f64> = s.row(99).iter().copied().collect();
        let mut extended = s.clone().insert_row(100, 0.0);
        for i in 0..3 {
            extended[(100, i)] = 0.0;
        }
        let ext = dcc_filter(&extended, &p, &rbar, false).unwrap();
        let f = fit.forecast_correlation_one_step(&last);
        assert!((f - &ext.r_last).abs().max() < 1e-14);

        let still = DccFit { params: DccParams { alpha: 0.0, beta: 0.0 }, ..fit.clone() };
        assert!((still.forecast_correlation_one_step(&last) - &rbar).abs().max() < 1e-15);
        let no_memory = DccFit { params: DccParams { alpha: 0.1, beta: 0.0 }, ..fit };
        let f = no_memory.forecast_correlation_one_step(&[0.0; 3]);
        assert!((f - &rbar).abs().max() < 1e-15);
    }

    #[test]
    fn fit_beats_truth_composite() {
        let dcc = DccParams { alpha: 0.04, beta: 0.93 };
        let spec = SimulationSpec::heterogeneous(6, 1500, dcc, 31);
        let sim = simulate_dcc_garch(&spec).unwrap();
        let rbar = spec.rbar_matrix();
        let fit = fit_dcc(&sim.std_residuals, &rbar, &DccOptions::default()).unwrap();
        let at_truth = composite_loglik(&sim.std_residuals, &dcc, &rbar, &fit.pair_scheme).unwrap();
        assert!(fit.composite_loglik >= at_truth - 1e-6);
        assert!((fit.params.alpha - 0.04).abs() < 0.03 && (fit.params.beta - 0.93).abs() < 0.05);
    }

    #[test]
    fn shuffled_scheme_is_a_permutation_chain() {
        let pairs = PairScheme::ShuffledContiguous { seed: 3 }.pairs(6).unwrap();
        assert_eq!(pairs.len(), 5);
        for w in pairs.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(pairs, PairScheme::ShuffledContiguous { seed: 3 }.pairs(6).unwrap());
        assert!(PairScheme::All.pairs(61).is_err());
    }
}
