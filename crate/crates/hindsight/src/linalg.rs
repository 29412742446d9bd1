//! Small dense linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

/// Maximum eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// (X + X')/2, suppressing asymmetric round-off drift.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest singular value of a symmetric matrix (max |eigenvalue|).
pub fn sym_norm2(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// True when `m` is symmetric within `tol` and its minimum eigenvalue
/// is at least `eig_floor`.
pub fn is_symmetric_with_min_eig(m: &DMatrix<f64>, tol: f64, eig_floor: f64) -> bool {
    let asym = (m - m.transpose()).norm();
    if asym > tol * (1.0 + m.norm()) {
        return false;
    }
    sym_min_eig(m) >= eig_floor
}

/// tr(A B) without forming the product.
pub fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// x' M x.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (m * x).dot(x)
}
