//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn max_asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and
/// eigenvectors permuted to match.
pub fn sym_eigen_sorted(a: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(a.clone());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(a: &Matrix) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// U diag(values) U'
pub fn rebuild(vectors: &Matrix, values: &Vector) -> Matrix {
    let mut scaled = vectors.clone();
    for (j, v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*v);
    }
    let mut out = &scaled * vectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Diag(Q)^{-1/2} Q Diag(Q)^{-1/2}, with the diagonal set to exactly one.
pub fn normalize_correlation(q: &Matrix) -> Matrix {
    let n = q.nrows();
    let inv_sd: Vec<f64> = (0..n).map(|i| 1.0 / q[(i, i)].sqrt()).collect();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = q[(i, j)] * inv_sd[i] * inv_sd[j];
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

pub fn cholesky_lower(a: &Matrix) -> Result<Matrix> {
    a.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

pub fn frobenius(a: &Matrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Clips eigenvalues below `floor_ratio * max` and rebuilds the matrix.
/// Returns the input unchanged when its smallest eigenvalue already exceeds zero.
pub fn repair_positive_definite(a: &Matrix, floor_ratio: f64) -> (Matrix, bool) {
    let (values, vectors) = sym_eigen_sorted(a);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values[0] > 0.0 {
        return (a.clone(), false);
    }
    let floor = floor_ratio * max.abs().max(f64::MIN_POSITIVE);
    let clipped = values.map(|v| v.max(floor));
    (rebuild(&vectors, &clipped), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_scale_invariant() {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 0.9]);
        let a = normalize_correlation(&q);
        let b = normalize_correlation(&(q.clone() * 7.5));
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn sorted_eigen_reconstructs() {
        let a = Matrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, vecs) = sym_eigen_sorted(&a);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        assert!(frobenius(&(rebuild(&vecs, &vals) - a)) < 1e-12);
    }

    #[test]
    fn repair_leaves_pd_matrices_alone() {
        let a = Matrix::identity(3, 3);
        let (b, repaired) = repair_positive_definite(&a, 1e-10);
        assert!(!repaired);
        assert_eq!(a, b);
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (fixed, repaired) = repair_positive_definite(&bad, 1e-10);
        assert!(repaired);
        assert!(min_eigenvalue(&fixed) > 0.0);
    }
}
