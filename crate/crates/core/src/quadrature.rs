//! Quadrature rules shared across modules.

use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "at least one node");
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (
        nodes.into_iter().map(T::lit).collect(),
        weights.into_iter().map(T::lit).collect(),
    )
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of `order` nodes.
pub fn composite_gauss_legendre<T: Real>(a: T, b: T, panels: usize, order: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(order);
    let h = (b - a) / T::from_usize(panels).unwrap();
    let half = T::lit(0.5);
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * T::from_usize(p).unwrap();
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + half * h * (*xi + T::one()));
            weights.push(half * h * *wi);
        }
    }
    (nodes, weights)
}
