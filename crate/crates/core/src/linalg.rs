//! Small dense helpers on top of faer.

use faer::{c64, Mat, MatRef};

pub fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).fold(c64::new(0.0, 0.0), |s, i| s + a[(i, i)])
}

/// `Tr(AB)` without forming the product.
pub fn trace_product(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Largest entry of `A − A*`.
pub fn hermitian_defect(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn is_real(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].im == 0.0))
}

pub fn real_part(a: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

pub fn imag_part(a: MatRef<'_, c64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im)
}
