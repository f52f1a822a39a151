//! Small dense helpers on top of nalgebra for Hermitian matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::C64;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending
/// order. Equal eigenvalues keep the solver's output order (stable sort), so
/// results are deterministic for a given input.
///
/// Each eigenvalue is the Rayleigh quotient v†Mv of its returned vector. The
/// complex solver can pair closely spaced small eigenvalues with each other's
/// vectors, and the quotient keeps every pair consistent.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let sym = hermitian_part(m);
    let eig = SymmetricEigen::new(sym.clone());
    let n = eig.eigenvalues.len();
    let rayleigh: Vec<f64> = (0..n)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            (v.adjoint() * &sym * v)[(0, 0)].re
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rayleigh[a].total_cmp(&rayleigh[b]));
    let values = order.iter().map(|&k| rayleigh[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Trace norm of a Hermitian matrix, i.e. the sum of absolute eigenvalues.
pub fn trace_norm_hermitian(m: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

/// (A + A^dag) / 2
pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// max |A - A^dag|
pub fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}
