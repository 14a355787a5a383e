//! Minimum-variance and equally weighted portfolios.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hybrid::CovarianceForecast;
use crate::linalg::{self, Matrix, Vector};

/// Largest acceptable condition number estimate for the covariance solve.
pub const MAX_CONDITION: f64 = 1e12;
const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    pub weights: Vec<f64>,
    pub as_of_date: String,
    pub label: String,
}

impl PortfolioWeights {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_date(mut self, date: impl Into<String>) -> Self {
        self.as_of_date = date.into();
        self
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Unconstrained MVP weights H⁻¹𝟙 / 𝟙'H⁻¹𝟙 through a Cholesky solve.
pub fn solve_min_variance(h: &Matrix) -> Result<Vec<f64>> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::Dimension(format!("covariance of shape {:?}", h.shape())));
    }
    let chol = h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let (lo, hi) = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    let cond = (hi / lo).powi(2);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let x = chol.solve(&Vector::from_element(n, 1.0));
    let total: f64 = x.iter().sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(Error::IllConditioned(cond));
    }
    Ok(x.iter().map(|v| v / total).collect())
}

pub fn min_variance_weights(h: &CovarianceForecast) -> Result<PortfolioWeights> {
    Ok(PortfolioWeights {
        weights: solve_min_variance(&h.matrix)?,
        as_of_date: h.as_of_date.clone(),
        label: "MVP".into(),
    })
}

/// Outcome of the long-only solver.
#[derive(Debug, Clone, PartialEq)]
pub struct LongOnlySolution {
    pub weights: Vec<f64>,
    /// Assets dropped by elimination (zero weight).
    pub eliminated: Vec<usize>,
    /// Set when elimination failed the KKT check and projected gradient ran.
    pub used_fallback: bool,
}

pub fn variance(h: &Matrix, w: &[f64]) -> f64 {
    let v = Vector::from_column_slice(w);
    (v.transpose() * h * &v)[(0, 0)]
}

/// Checks 2(Hw)_j ≥ 2w'Hw − 1e−8 for every zero-weight asset.
pub fn long_only_kkt_holds(h: &Matrix, w: &[f64]) -> bool {
    let v = Vector::from_column_slice(w);
    let hw = h * &v;
    let obj = v.dot(&hw);
    w.iter()
        .enumerate()
        .filter(|(_, x)| **x <= 0.0)
        .all(|(j, _)| 2.0 * hw[j] >= 2.0 * obj - KKT_TOLERANCE)
}

/// min w'Hw subject to Σw = 1, w ≥ 0.
pub fn solve_min_variance_long_only(h: &Matrix) -> Result<LongOnlySolution> {
    let n = h.nrows();
    let mut active: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; n];
    loop {
        let sub = Matrix::from_fn(active.len(), active.len(), |a, b| h[(active[a], active[b])]);
        let sw = solve_min_variance(&sub)?;
        if sw.iter().all(|x| *x >= 0.0) {
            w.iter_mut().for_each(|x| *x = 0.0);
            for (k, &i) in active.iter().enumerate() {
                w[i] = sw[k];
            }
            break;
        }
        active = active
            .iter()
            .zip(&sw)
            .filter(|(_, x)| **x >= 0.0)
            .map(|(i, _)| *i)
            .collect();
        if active.is_empty() {
            return Err(Error::Constraint("long-only elimination removed every asset".into()));
        }
    }
    let eliminated: Vec<usize> = (0..n).filter(|i| !active.contains(i)).collect();
    if long_only_kkt_holds(h, &w) {
        return Ok(LongOnlySolution {
            weights: w,
            eliminated,
            used_fallback: false,
        });
    }
    log::debug!("long-only elimination failed KKT check; running projected gradient");
    let w = projected_gradient(h, &w, 1e-10);
    let eliminated = (0..n).filter(|&i| w[i] == 0.0).collect();
    Ok(LongOnlySolution {
        weights: w,
        eliminated,
        used_fallback: true,
    })
}

pub fn min_variance_weights_long_only(h: &CovarianceForecast) -> Result<PortfolioWeights> {
    Ok(PortfolioWeights {
        weights: solve_min_variance_long_only(&h.matrix)?.weights,
        as_of_date: h.as_of_date.clone(),
        label: "MVP-long-only".into(),
    })
}

/// Euclidean projection onto the unit simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn projected_gradient(h: &Matrix, start: &[f64], tol: f64) -> Vec<f64> {
    let lmax = linalg::sym_eigen_sorted(h).0.max();
    let step = 1.0 / (2.0 * lmax);
    let mut w = project_to_simplex(start);
    let mut obj = variance(h, &w);
    for _ in 0..1_000_000 {
        let g = h * Vector::from_column_slice(&w) * 2.0;
        let trial: Vec<f64> = w.iter().zip(g.iter()).map(|(x, gi)| x - step * gi).collect();
        let next = project_to_simplex(&trial);
        let next_obj = variance(h, &next);
        let done = (obj - next_obj).abs() <= tol * obj.abs().max(f64::MIN_POSITIVE);
        w = next;
        obj = next_obj;
        if done {
            break;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

pub fn equal_weights(n: usize) -> Result<PortfolioWeights> {
    if n == 0 {
        return Err(Error::InvalidInput("equal weights need at least one asset".into()));
    }
    Ok(PortfolioWeights {
        weights: vec![1.0 / n as f64; n],
        as_of_date: String::new(),
        label: "1/N".into(),
    })
}

pub fn portfolio_return(weights: &[f64], returns: &[f64]) -> Result<f64> {
    if weights.len() != returns.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} returns",
            weights.len(),
            returns.len()
        )));
    }
    Ok(weights.iter().zip(returns).map(|(w, r)| w * r).sum())
}

/// Rows `date,asset,weight,model_label` with a header.
pub fn weights_to_csv(records: &[PortfolioWeights], assets: &[String]) -> String {
    let mut out = String::from("date,asset,weight,model_label\n");
    for rec in records {
        for (asset, w) in assets.iter().zip(&rec.weights) {
            let _ = writeln!(out, "{},{},{},{}", rec.as_of_date, asset, w, rec.label);
        }
    }
    out
}
