//! Univariate GARCH(1,1) with Gaussian innovations.
//!
//! σ²_t = ω + α y²_{t-1} + β σ²_{t-1}, with the returns taken as zero-mean
//! residuals. The variance path starts from the sample variance of the series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::market_data::ReturnPanel;
use crate::optim::{self, OptimOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const PERSISTENCE_CAP: f64 = 1.0 - 1e-6;

/// Shortest series `fit_garch` accepts.
pub const MIN_FIT_LENGTH: usize = 50;

/// Deterministic optimizer starts as (ω / sample variance, α, β).
pub const FIT_STARTS: [(f64, f64, f64); 3] = [(0.1, 0.05, 0.90), (0.45, 0.05, 0.50), (0.85, 0.10, 0.05)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Constraint(format!(
                "GARCH needs omega > 0, alpha ≥ 0, beta ≥ 0 (got {self:?})"
            )));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::Constraint(format!(
                "GARCH needs alpha + beta < 1 (got {})",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }

    /// ω / (1 − α − β)
    pub fn unconditional_variance(&self) -> Result<f64> {
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::Constraint(format!(
                "unconditional variance undefined for alpha + beta = {}",
                self.alpha + self.beta
            )));
        }
        Ok(self.omega / (1.0 - self.alpha - self.beta))
    }

    /// One recursion step.
    #[inline]
    pub fn next_variance(&self, last_return: f64, last_sigma2: f64) -> f64 {
        self.omega + self.alpha * last_return * last_return + self.beta * last_sigma2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub params: GarchParams,
    pub sigma2_init: f64,
    pub sigma2_path: Vec<f64>,
    /// ε_t = y_t under the zero-mean convention.
    pub residuals: Vec<f64>,
    pub std_residuals: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
}

impl GarchFit {
    /// Builds a fit record for fixed parameters (no estimation).
    pub fn from_params(returns: &[f64], params: GarchParams, sigma2_init: f64) -> Self {
        let sigma2_path = garch_filter(returns, &params, sigma2_init);
        let std_residuals = returns
            .iter()
            .zip(&sigma2_path)
            .map(|(y, s2)| y / s2.sqrt())
            .collect();
        let loglik = loglik_on_path(returns, &sigma2_path);
        Self {
            params,
            sigma2_init,
            sigma2_path,
            residuals: returns.to_vec(),
            std_residuals,
            loglik,
            converged: true,
        }
    }

    pub fn sigma2_last(&self) -> f64 {
        *self.sigma2_path.last().expect("non-empty fit")
    }

    /// Re-runs the variance recursion with this fit's parameters and initial
    /// state over a longer series sharing the in-sample prefix.
    pub fn filter_extended(&self, returns: &[f64]) -> Vec<f64> {
        garch_filter(returns, &self.params, self.sigma2_init)
    }

    pub fn summary(&self) -> GarchFitSummary {
        GarchFitSummary {
            omega: self.params.omega,
            alpha: self.params.alpha,
            beta: self.params.beta,
            loglik: self.loglik,
            converged: self.converged,
            sigma2_last: self.sigma2_last(),
        }
    }
}

/// JSON record for one asset's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFitSummary {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub loglik: f64,
    pub converged: bool,
    pub sigma2_last: f64,
}

/// σ² path with `sigma2_path[0] = sigma2_init`.
pub fn garch_filter(returns: &[f64], params: &GarchParams, sigma2_init: f64) -> Vec<f64> {
    let mut path = Vec::with_capacity(returns.len());
    if returns.is_empty() {
        return path;
    }
    let mut s2 = sigma2_init;
    path.push(s2);
    for y in &returns[..returns.len() - 1] {
        s2 = params.next_variance(*y, s2);
        path.push(s2);
    }
    path
}

fn loglik_on_path(returns: &[f64], sigma2: &[f64]) -> f64 {
    -0.5 * returns
        .iter()
        .zip(sigma2)
        .map(|(y, s2)| LN_2PI + s2.ln() + y * y / s2)
        .sum::<f64>()
}

/// Gaussian log-likelihood including the −(T/2) log 2π constant.
pub fn garch_loglik(returns: &[f64], params: &GarchParams, sigma2_init: f64) -> f64 {
    loglik_on_path(returns, &garch_filter(returns, params, sigma2_init))
}

/// Log-likelihood and its gradient in (ω, α, β), by forward-mode
/// differentiation of the variance recursion.
pub fn garch_loglik_grad(returns: &[f64], params: &GarchParams, sigma2_init: f64) -> (f64, [f64; 3]) {
    let mut ll = 0.0;
    let mut grad = [0.0; 3];
    let mut s2 = sigma2_init;
    let mut ds = [0.0f64; 3];
    for (t, y) in returns.iter().enumerate() {
        if t > 0 {
            let y_prev = returns[t - 1];
            let b = params.beta;
            ds = [
                1.0 + b * ds[0],
                y_prev * y_prev + b * ds[1],
                s2 + b * ds[2],
            ];
            s2 = params.next_variance(y_prev, s2);
        }
        ll -= 0.5 * (LN_2PI + s2.ln() + y * y / s2);
        let dl_ds2 = -0.5 * (1.0 / s2 - y * y / (s2 * s2));
        for k in 0..3 {
            grad[k] += dl_ds2 * ds[k];
        }
    }
    (ll, grad)
}

pub(crate) fn sample_variance(returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    returns.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn params_from_unconstrained(u: &[f64]) -> GarchParams {
    let (alpha, beta) = optim::simplex_from_unconstrained(&u[1..], PERSISTENCE_CAP);
    GarchParams {
        omega: u[0].exp(),
        alpha,
        beta,
    }
}

/// Maximum-likelihood GARCH(1,1) fit.
///
/// Optimizes over (log ω, softmax logits of α and β) with BFGS, falling back
/// to Nelder-Mead when the line search stalls. The search runs from each of
/// [`FIT_STARTS`] and keeps the best converged optimum, since the map onto the
/// simplex flattens the objective near α = 0 or β = 0 and a single start can
/// stall on that edge.
pub fn fit_garch(returns: &[f64]) -> Result<GarchFit> {
    let t = returns.len();
    if t < MIN_FIT_LENGTH {
        return Err(Error::InvalidInput(format!(
            "GARCH fit needs at least {MIN_FIT_LENGTH} observations, got {t}"
        )));
    }
    if returns.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("non-finite return".into()));
    }
    let var = sample_variance(returns);
    if !(var > 0.0) || returns.iter().all(|y| *y == returns[0]) {
        return Err(Error::ZeroVariance);
    }
    let scale = t as f64;
    let objective = |u: &[f64]| -garch_loglik(returns, &params_from_unconstrained(u), var) / scale;
    let value_grad = |u: &[f64]| {
        let p = params_from_unconstrained(u);
        let (ll, g) = garch_loglik_grad(returns, &p, var);
        let c = PERSISTENCE_CAP;
        let (a, b) = (p.alpha, p.beta);
        let du = [
            g[0] * p.omega,
            g[1] * a * (1.0 - a / c) - g[2] * a * b / c,
            -g[1] * a * b / c + g[2] * b * (1.0 - b / c),
        ];
        (-ll / scale, du.iter().map(|v| -v / scale).collect())
    };
    let results: Vec<_> = FIT_STARTS
        .iter()
        .map(|&(w, a, b)| {
            let [u1, u2] = optim::simplex_to_unconstrained(a, b, PERSISTENCE_CAP);
            let start = [(w * var).ln(), u1, u2];
            optim::minimize(objective, value_grad, &start, &OptimOptions::default())
        })
        .collect();
    let best = |converged: bool| {
        results
            .iter()
            .filter(|r| r.converged == converged)
            .min_by(|x, y| x.value.total_cmp(&y.value))
    };
    let Some(result) = best(true) else {
        let r = best(false).expect("at least one start");
        let p = params_from_unconstrained(&r.x);
        return Err(Error::NonConvergence {
            iterations: r.iterations,
            best_value: -r.value * scale,
            best_params: vec![p.omega, p.alpha, p.beta],
        });
    };
    let params = params_from_unconstrained(&result.x);
    let mut fit = GarchFit::from_params(returns, params, var);
    fit.converged = result.converged;
    Ok(fit)
}

/// ω + α·y_T² + β·σ²_T from the end of the fitted path.
pub fn forecast_variance_one_step(fit: &GarchFit, last_return: f64) -> f64 {
    fit.params.next_variance(last_return, fit.sigma2_last())
}

/// Per-asset fits plus the implied volatility and standardized-residual panels.
#[derive(Debug, Clone)]
pub struct Degarched {
    pub fits: Vec<GarchFit>,
    /// T×N conditional volatilities, the diagonals of D_t.
    pub volatilities: Matrix,
    /// T×N standardized residuals s_t = D_t^{-1} y_t.
    pub std_residuals: Matrix,
}

impl Degarched {
    fn from_fits(fits: Vec<GarchFit>, t: usize) -> Self {
        let n = fits.len();
        let volatilities = Matrix::from_fn(t, n, |s, i| fits[i].sigma2_path[s].sqrt());
        let std_residuals = Matrix::from_fn(t, n, |s, i| fits[i].std_residuals[s]);
        Self {
            fits,
            volatilities,
            std_residuals,
        }
    }

    /// Diagonal of D_t for day `t`.
    pub fn d_diag(&self, t: usize) -> Vec<f64> {
        self.volatilities.row(t).iter().copied().collect()
    }
}

/// Fits one GARCH per asset (in parallel; results equal the sequential run)
/// and standardizes the panel.
pub fn degarch(panel: &ReturnPanel) -> Result<Degarched> {
    let fits = (0..panel.n_assets())
        .into_par_iter()
        .map(|i| fit_garch(&panel.column(i)).map_err(|e| e.for_asset(&panel.assets[i])))
        .collect::<Result<Vec<_>>>()?;
    Ok(Degarched::from_fits(fits, panel.n_days()))
}

/// Standardizes the panel with given parameters, skipping estimation. The
/// variance recursion starts from each asset's sample variance unless
/// `sigma2_init` is supplied.
pub fn degarch_with_params(
    panel: &ReturnPanel,
    params: &[GarchParams],
    sigma2_init: Option<&[f64]>,
) -> Result<Degarched> {
    if params.len() != panel.n_assets() {
        return Err(Error::Dimension(format!(
            "{} parameter sets for {} assets",
            params.len(),
            panel.n_assets()
        )));
    }
    let fits = (0..panel.n_assets())
        .map(|i| {
            let y = panel.column(i);
            params[i].validate().map_err(|e| e.for_asset(&panel.assets[i]))?;
            let init = match sigma2_init {
                Some(v) => v[i],
                None => sample_variance(&y),
            };
            Ok(GarchFit::from_params(&y, params[i], init))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Degarched::from_fits(fits, panel.n_days()))
}

/// Serializes per-asset fit summaries keyed by asset id.
pub fn fits_to_json(assets: &[String], fits: &[GarchFit]) -> Result<String> {
    let map: serde_json::Map<String, serde_json::Value> = assets
        .iter()
        .zip(fits)
        .map(|(a, f)| Ok((a.clone(), serde_json::to_value(f.summary())?)))
        .collect::<Result<_>>()?;
    Ok(serde_json::to_string_pretty(&map)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn simulate(params: &GarchParams, t: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::seeded(seed);
        let mut s2 = params.unconditional_variance().unwrap();
        let mut ys = Vec::with_capacity(t);
        let mut path = Vec::with_capacity(t);
        for k in 0..t {
            if k > 0 {
                s2 = params.next_variance(ys[k - 1], s2);
            }
            path.push(s2);
            ys.push(s2.sqrt() * rng::standard_normal(&mut r));
        }
        (ys, path)
    }

    #[test]
    fn filter_step_by_hand() {
        let p = GarchParams { omega: 0.1, alpha: 0.1, beta: 0.8 };
        let path = garch_filter(&[1.0, 0.5], &p, 1.0);
        assert_eq!(path[0], 1.0);
        assert!((path[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filter_collapses_without_dynamics() {
        let p = GarchParams { omega: 0.3, alpha: 0.0, beta: 0.0 };
        let path = garch_filter(&[1.0, -2.0, 3.0, 0.1], &p, 5.0);
        assert_eq!(path, vec![5.0, 0.3, 0.3, 0.3]);
    }

    #[test]
    fn filter_matches_simulator() {
        let p = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
        let (ys, path) = simulate(&p, 2000, 3);
        let filtered = garch_filter(&ys, &p, path[0]);
        for (a, b) in filtered.iter().zip(&path) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn unconditional_variance_examples() {
        let v = |o, a, b| GarchParams { omega: o, alpha: a, beta: b }.unconditional_variance();
        assert!((v(0.1, 0.05, 0.90).unwrap() - 2.0).abs() < 1e-12);
        assert!((v(0.3, 0.0, 0.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((v(0.05, 0.08, 0.90).unwrap() - 2.5).abs() < 1e-12);
        assert!(v(0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn loglik_single_point() {
        let p = GarchParams { omega: 1.0, alpha: 0.0, beta: 0.0 };
        let ll = garch_loglik(&[0.0], &p, 1.0);
        assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn loglik_change_of_variables() {
        let p = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
        let (ys, _) = simulate(&p, 200, 11);
        let c: f64 = 3.7;
        let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
        let p2 = GarchParams { omega: c * c * p.omega, ..p };
        let a = garch_loglik(&ys, &p, 0.4);
        let b = garch_loglik(&scaled, &p2, 0.4 * c * c);
        assert!((b - (a - ys.len() as f64 * c.ln())).abs() < 1e-9);
    }

    #[test]
    fn loglik_matches_density_product() {
        let p = GarchParams { omega: 0.02, alpha: 0.1, beta: 0.85 };
        let (ys, _) = simulate(&p, 50, 5);
        // naive: product of normal densities, accumulated in log space
        let mut s2 = 0.6;
        let mut naive = 0.0;
        for t in 0..ys.len() {
            if t > 0 {
                s2 = 0.02 + 0.1 * ys[t - 1] * ys[t - 1] + 0.85 * s2;
            }
            let dens = (-ys[t] * ys[t] / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
            naive += dens.ln();
        }
        assert!((garch_loglik(&ys, &p, 0.6) - naive).abs() < 1e-10);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut r = rng::seeded(99);
        use rand::Rng;
        for case in 0..10 {
            let truth = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
            let (ys, _) = simulate(&truth, 300, 100 + case);
            let p = GarchParams {
                omega: r.random_range(0.01..0.2),
                alpha: r.random_range(0.01..0.2),
                beta: r.random_range(0.5..0.78),
            };
            let (_, g) = garch_loglik_grad(&ys, &p, 1.3);
            let h = 1e-5;
            let fd = |k: usize| {
                let mut up = [p.omega, p.alpha, p.beta];
                let mut dn = up;
                up[k] += h;
                dn[k] -= h;
                let mk = |v: [f64; 3]| GarchParams { omega: v[0], alpha: v[1], beta: v[2] };
                (garch_loglik(&ys, &mk(up), 1.3) - garch_loglik(&ys, &mk(dn), 1.3)) / (2.0 * h)
            };
            for k in 0..3 {
                let n = fd(k);
                let rel = (g[k] - n).abs() / (g[k].abs() + n.abs()).max(1e-8);
                assert!(rel <= 1e-4, "case {case} k {k}: {} vs {}", g[k], n);
            }
        }
    }

    #[test]
    fn fit_beats_truth_likelihood() {
        let p = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
        let (ys, _) = simulate(&p, 3000, 21);
        let fit = fit_garch(&ys).unwrap();
        assert!(fit.converged);
        let at_truth = garch_loglik(&ys, &p, fit.sigma2_init);
        assert!(fit.loglik >= at_truth - 1e-6, "{} < {}", fit.loglik, at_truth);
        assert!((fit.params.alpha - 0.08).abs() < 0.05);
        assert!((fit.params.beta - 0.9).abs() < 0.05);
    }

    #[test]
    fn fit_is_scale_consistent() {
        let p = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
        let (ys, _) = simulate(&p, 2000, 8);
        let c = 0.01;
        let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
        let a = fit_garch(&ys).unwrap();
        let b = fit_garch(&scaled).unwrap();
        assert!((a.params.alpha - b.params.alpha).abs() < 1e-3);
        assert!((a.params.beta - b.params.beta).abs() < 1e-3);
        assert!((b.params.omega / (c * c) / a.params.omega - 1.0).abs() < 1e-2);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(fit_garch(&[0.01; 100]), Err(Error::ZeroVariance)));
        assert!(matches!(fit_garch(&[0.01; 10]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn forecast_examples() {
        let p = GarchParams { omega: 0.2, alpha: 0.0, beta: 0.0 };
        let fit = GarchFit::from_params(&[0.1, -0.3, 0.5], p, 1.0);
        assert_eq!(forecast_variance_one_step(&fit, 0.7), 0.2);
        let p = GarchParams { omega: 0.2, alpha: 0.3, beta: 0.0 };
        let fit = GarchFit::from_params(&[0.1, -0.3, 0.5], p, 1.0);
        assert_eq!(forecast_variance_one_step(&fit, 0.0), 0.2);
    }

    #[test]
    fn forecast_matches_extended_filter() {
        let p = GarchParams { omega: 0.05, alpha: 0.08, beta: 0.9 };
        let (ys, _) = simulate(&p, 101, 2);
        let fit = GarchFit::from_params(&ys[..100], p, 0.9);
        let extended = garch_filter(&ys, &p, 0.9);
        assert_eq!(forecast_variance_one_step(&fit, ys[99]), extended[100]);
    }

    #[test]
    fn degarch_constant_variance_collapse() {
        let ys = vec![0.02, -0.01, 0.03, 0.0];
        let panel = ReturnPanel::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec!["A".into()],
            Matrix::from_column_slice(4, 1, &ys),
        )
        .unwrap();
        let p = GarchParams { omega: 4e-4, alpha: 0.0, beta: 0.0 };
        let d = degarch_with_params(&panel, &[p], Some(&[4e-4])).unwrap();
        for (t, y) in ys.iter().enumerate() {
            assert!((d.std_residuals[(t, 0)] - y / 0.02).abs() < 1e-14);
        }
    }
}
