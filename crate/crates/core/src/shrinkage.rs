//! Unconditional correlation estimation with eigenvalue shrinkage.
//!
//! The nonlinear estimator keeps the sample eigenvectors and replaces each
//! sample eigenvalue λ by
//!
//! ```text
//! λ̂ = λ / |1 − c − c·λ·m(λ)|²,   c = N/T
//! ```
//!
//! where m is the boundary value of the Stieltjes transform of the limiting
//! sample spectral distribution. m is estimated straight from the sample
//! spectrum with an Epanechnikov kernel of locally adaptive width λ_j·T^{-1/3}:
//! the imaginary part is π times the kernel density and the real part is the
//! principal-value integral, which has a closed form for this kernel.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

const SQRT5: f64 = 2.236_067_977_499_79;
const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vector,
    /// Columns are the eigenvectors matching `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        linalg::rebuild(&self.eigenvectors, &self.eigenvalues)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkageMethod {
    Sample,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone)]
pub struct ShrinkageResult {
    /// Final estimate. For the nonlinear method this is rescaled to unit diagonal.
    pub matrix: Matrix,
    /// U·diag(shrunk_eigenvalues)·U' before any diagonal rescaling.
    pub eigen_matrix: Matrix,
    pub shrunk_eigenvalues: Vec<f64>,
    /// (Re m, Im m) at each sample eigenvalue; empty unless nonlinear.
    pub stieltjes_values: Vec<(f64, f64)>,
    pub method: ShrinkageMethod,
    pub decomposition: SpectralDecomposition,
}

/// (1/T)·S'S without demeaning or rescaling.
pub fn sample_correlation(s: &Matrix) -> Result<Matrix> {
    let t = s.nrows();
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "sample correlation needs T ≥ 2, got {t}"
        )));
    }
    let mut c = s.tr_mul(s) / t as f64;
    linalg::symmetrize(&mut c);
    Ok(c)
}

pub fn eigendecompose(a: &Matrix) -> Result<SpectralDecomposition> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let asym = linalg::max_asymmetry(a);
    if asym > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (max |a_ij − a_ji| = {asym:.3e})"
        )));
    }
    let (eigenvalues, eigenvectors) = linalg::sym_eigen_sorted(a);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Pulls eigenvalues toward their mean: (1 − κ)·λ_i + κ·mean(λ).
pub fn linear_shrink(a: &Matrix, intensity: f64) -> Result<ShrinkageResult> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::InvalidInput(format!(
            "shrinkage intensity {intensity} outside [0, 1]"
        )));
    }
    let dec = eigendecompose(a)?;
    let mean = dec.eigenvalues.mean();
    let shrunk = dec
        .eigenvalues
        .map(|l| (1.0 - intensity) * l + intensity * mean);
    let matrix = linalg::rebuild(&dec.eigenvectors, &shrunk);
    Ok(ShrinkageResult {
        eigen_matrix: matrix.clone(),
        matrix,
        shrunk_eigenvalues: shrunk.iter().copied().collect(),
        stieltjes_values: Vec::new(),
        method: ShrinkageMethod::Linear,
        decomposition: dec,
    })
}

/// Epanechnikov kernel on [−√5, √5] (unit variance).
pub fn epanechnikov(x: f64) -> f64 {
    let q = 1.0 - x * x / 5.0;
    if q > 0.0 {
        3.0 / (4.0 * SQRT5) * q
    } else {
        0.0
    }
}

/// (1/π)·PV∫ k(t)/(t − x) dt for the Epanechnikov kernel.
pub fn epanechnikov_hilbert(x: f64) -> f64 {
    let lin = -3.0 * x / (10.0 * PI);
    let d = (SQRT5 - x).abs();
    if d == 0.0 || (SQRT5 + x).abs() == 0.0 {
        // the logarithmic term vanishes at the support edges
        return lin;
    }
    lin + 3.0 / (4.0 * SQRT5 * PI) * (1.0 - x * x / 5.0) * (d / (SQRT5 + x).abs()).ln()
}

/// Kernel estimate of the Stieltjes transform at each sample eigenvalue,
/// returned as (Re, Im).
pub fn stieltjes_at_eigenvalues(eigenvalues: &[f64], t: usize) -> Vec<(f64, f64)> {
    let n = eigenvalues.len() as f64;
    let h = (t as f64).powf(-1.0 / 3.0);
    let top = eigenvalues.iter().copied().fold(0.0, f64::max);
    let widths: Vec<f64> = eigenvalues
        .iter()
        .map(|&l| l.max(1e-12 * top.max(f64::MIN_POSITIVE)) * h)
        .collect();
    eigenvalues
        .iter()
        .map(|&x| {
            let mut dens = 0.0;
            let mut hilb = 0.0;
            for (&l, &w) in eigenvalues.iter().zip(&widths) {
                let u = (x - l) / w;
                dens += epanechnikov(u) / w;
                hilb += epanechnikov_hilbert(u) / w;
            }
            (PI * hilb / n, PI * dens / n)
        })
        .collect()
}

/// Applies λ / |1 − c − c·λ·m(λ)|² eigenvalue by eigenvalue.
pub fn shrink_eigenvalues(eigenvalues: &[f64], stieltjes: &[(f64, f64)], ratio: f64) -> Vec<f64> {
    eigenvalues
        .iter()
        .zip(stieltjes)
        .map(|(&l, &(re, im))| {
            let real = 1.0 - ratio - ratio * l * re;
            let imag = -ratio * l * im;
            l / (real * real + imag * imag)
        })
        .collect()
}

/// Nonlinear shrinkage of the sample correlation of `s` (T×N), rescaled to a
/// unit diagonal so it can serve as a correlation target.
pub fn nonlinear_shrink(s: &Matrix) -> Result<ShrinkageResult> {
    let (t, n) = s.shape();
    if t < 12 || n + 2 > t {
        return Err(Error::InsufficientObservations { n, t });
    }
    let sample = sample_correlation(s)?;
    let dec = eigendecompose(&sample)?;
    let lambdas: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let stieltjes = stieltjes_at_eigenvalues(&lambdas, t);
    let mut shrunk = shrink_eigenvalues(&lambdas, &stieltjes, n as f64 / t as f64);
    let top = shrunk.iter().copied().fold(0.0, f64::max);
    for v in shrunk.iter_mut() {
        *v = v.max(EIGEN_FLOOR * top);
    }
    let eigen_matrix = linalg::rebuild(&dec.eigenvectors, &Vector::from_vec(shrunk.clone()));
    let matrix = linalg::normalize_correlation(&eigen_matrix);
    Ok(ShrinkageResult {
        matrix,
        eigen_matrix,
        shrunk_eigenvalues: shrunk,
        stieltjes_values: stieltjes,
        method: ShrinkageMethod::Nonlinear,
        decomposition: dec,
    })
}

/// Unit-diagonal correlation target from standardized residuals.
pub fn estimate_target(s: &Matrix, method: ShrinkageMethod, linear_intensity: f64) -> Result<Matrix> {
    match method {
        ShrinkageMethod::Sample => Ok(linalg::normalize_correlation(&sample_correlation(s)?)),
        ShrinkageMethod::Linear => {
            let c = sample_correlation(s)?;
            Ok(linalg::normalize_correlation(&linear_shrink(&c, linear_intensity)?.matrix))
        }
        ShrinkageMethod::Nonlinear => Ok(nonlinear_shrink(s)?.matrix),
    }
}

/// Writes a matrix as plain CSV, one row per line.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
