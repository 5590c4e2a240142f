//! Small dense symmetric linear algebra helpers shared across the crate.
//!
//! Everything here is backed by nalgebra's pure-Rust symmetric
//! eigendecomposition, so the crate builds identically on native and wasm
//! targets. Gram matrices of nested projection collections are rank
//! deficient by construction, so solves go through an eigenvalue-truncated
//! pseudo-inverse rather than a factorization that assumes full rank.

use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with descending eigenvalue order.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    if n == 0 {
        return SymEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

/// Minimum-norm solution of the symmetric system `g x = rhs`.
///
/// Eigenvalues at or below `rel_tol * lambda_max` are discarded, which makes
/// rank-deficient Gram systems (nested collections, duplicated members) the
/// normal case rather than an error.
pub fn sym_pinv_solve(g: &DMatrix<f64>, rhs: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let n = g.nrows();
    if n == 0 {
        return DVector::zeros(0);
    }
    let eig = sym_eigen(g);
    let lambda_max = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = rel_tol * lambda_max;
    let mut x = DVector::zeros(n);
    for k in 0..n {
        let lambda = eig.values[k];
        if lambda > cutoff {
            let q = eig.vectors.column(k);
            x += q * (q.dot(rhs) / lambda);
        }
    }
    x
}

/// `Tr(g_pinv * k)` without materializing the pseudo-inverse.
pub fn pinv_trace_product(g: &DMatrix<f64>, k: &DMatrix<f64>, rel_tol: f64) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let eig = sym_eigen(g);
    let lambda_max = eig.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = rel_tol * lambda_max;
    let mut total = 0.0;
    for i in 0..n {
        let lambda = eig.values[i];
        if lambda > cutoff {
            let q = eig.vectors.column(i);
            total += q.dot(&(k * q)) / lambda;
        }
    }
    total
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn eigen_extrema(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = sym_eigen(m);
    match (eig.values.last(), eig.values.first()) {
        (Some(&min), Some(&max)) => (min, max),
        _ => (0.0, 0.0),
    }
}

/// Check `lambda_min >= -tol * max(lambda_max, 1)`; returns the offending
/// minimum eigenvalue on failure.
pub fn psd_violation(m: &DMatrix<f64>, tol: f64) -> Option<f64> {
    if m.nrows() == 0 {
        return None;
    }
    let (min, max) = eigen_extrema(m);
    if min < -tol * max.max(1.0) {
        Some(min)
    } else {
        None
    }
}

/// Maximum absolute asymmetry `|m_ij - m_ji|` over all pairs.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `Tr(a * b)` for same-size square matrices.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += a[(i, j)] * b[(j, i)];
        }
    }
    total
}
