//! Semicircle law: Stieltjes transform, density, its Fourier transform and
//! divided differences of `m`.

use crate::scalar::{cx, Cx, Real};
use num_traits::{One, Zero};
use thiserror::Error;

/// Switch point between the power series and the Hankel expansion of `J₁`.
pub const BESSEL_SWITCH: f64 = 12.0;
const HANKEL_TERMS: usize = 13;
const FIRST_PANEL: usize = 64;
const MAX_PANEL: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemicircleError {
    #[error("spectral parameter {re}{im:+}i lies on the real axis")]
    OnAxis { re: f64, im: f64 },
    #[error("semicircle quadrature did not converge with {nodes} nodes")]
    NonConvergence { nodes: usize },
    #[error("divided difference needs at least one point")]
    Empty,
}

fn on_axis<T: Real>(z: Cx<T>) -> SemicircleError {
    SemicircleError::OnAxis {
        re: z.re.to_f64().unwrap_or(f64::NAN),
        im: z.im.to_f64().unwrap_or(f64::NAN),
    }
}

/// Stieltjes transform of the semicircle law, the root of `m² + zm + 1 = 0`
/// with `Im m · Im z > 0`.
pub fn m_sc<T: Real>(z: Cx<T>) -> Result<Cx<T>, SemicircleError> {
    if z.im == T::zero() || !z.im.is_finite() || !z.re.is_finite() {
        return Err(on_axis(z));
    }
    let two = T::lit(2.0);
    let s = (z - two).sqrt() * (z + two).sqrt();
    let mut m = -cx(two, T::zero()) / (z + s);
    if m.im * z.im <= T::zero() {
        m = Cx::<T>::one() / m;
    }
    // one Newton step cleans up the last few ulps
    let f = m * m + z * m + Cx::one();
    let df = m * two + z;
    if df.norm() > T::epsilon() {
        let polished = m - f / df;
        if polished.im * z.im > T::zero() {
            m = polished;
        }
    }
    Ok(m)
}

/// Semicircle density `(2π)⁻¹ √(4 − x²)₊`.
pub fn rho_sc<T: Real>(x: T) -> T {
    let v = T::lit(4.0) - x * x;
    if v <= T::zero() {
        T::zero()
    } else {
        v.sqrt() / (T::lit(2.0) * T::PI())
    }
}

/// Harmonic extension of the density, `|Im m(z)| / π`.
pub fn density_at<T: Real>(z: Cx<T>) -> Result<T, SemicircleError> {
    Ok(m_sc(z)?.im.abs() / T::PI())
}

/// A validated non-real spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParam<T: Real> {
    z: Cx<T>,
    m: Cx<T>,
}

impl<T: Real> SpectralParam<T> {
    pub fn new(z: Cx<T>) -> Result<Self, SemicircleError> {
        Ok(Self { z, m: m_sc(z)? })
    }

    pub fn from_parts(re: T, im: T) -> Result<Self, SemicircleError> {
        Self::new(cx(re, im))
    }

    #[inline]
    pub fn z(&self) -> Cx<T> {
        self.z
    }

    #[inline]
    pub fn m(&self) -> Cx<T> {
        self.m
    }

    #[inline]
    pub fn eta(&self) -> T {
        self.z.im.abs()
    }

    #[inline]
    pub fn rho(&self) -> T {
        self.m.im.abs() / T::PI()
    }

    /// Local length scale `η ρ`.
    #[inline]
    pub fn ell(&self) -> T {
        self.eta() * self.rho()
    }

    #[inline]
    pub fn upper(&self) -> bool {
        self.z.im > T::zero()
    }
}

/// `min_j η_j ρ_j` over a set of spectral parameters.
pub fn ell_of<T: Real>(zs: &[Cx<T>]) -> Result<T, SemicircleError> {
    let mut ell = T::infinity();
    for &z in zs {
        ell = ell.min(SpectralParam::new(z)?.ell());
    }
    Ok(ell)
}

/// Bessel function `J₁`.
pub fn bessel_j1<T: Real>(s: T) -> T {
    if s < T::zero() {
        return -bessel_j1(-s);
    }
    if s <= T::lit(BESSEL_SWITCH) {
        let h = s * T::lit(0.5);
        h * series_j1_over_half(h * h)
    } else {
        hankel_j1(s)
    }
}

/// `Σ (−1)^k q^k / (k!(k+1)!)`, so that `J₁(s) = (s/2) · series(s²/4)`.
fn series_j1_over_half<T: Real>(q: T) -> T {
    let mut term = T::one();
    let mut total = T::one();
    let mut k = 0usize;
    loop {
        k += 1;
        let kf = T::from_usize(k).unwrap();
        term = -term * q / (kf * (kf + T::one()));
        total = total + term;
        if term.abs() <= T::epsilon() * T::lit(1e-3) * total.abs().max(T::one()) || k > 200 {
            return total;
        }
    }
}

fn hankel_j1<T: Real>(s: T) -> T {
    let mu = T::lit(4.0);
    let eight_s = T::lit(8.0) * s;
    // a_k / (8s)^k built incrementally
    let mut coef = T::one();
    let mut p = T::zero();
    let mut q = T::zero();
    for k in 0..2 * HANKEL_TERMS {
        let sign = if (k / 2) % 2 == 0 { T::one() } else { -T::one() };
        if k % 2 == 0 {
            p = p + sign * coef;
        } else {
            q = q + sign * coef;
        }
        let odd = T::from_usize(2 * k + 1).unwrap();
        coef = coef * (mu - odd * odd) / (T::from_usize(k + 1).unwrap() * eight_s);
    }
    let chi = s - T::lit(0.75) * T::PI();
    (T::lit(2.0) / (T::PI() * s)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Fourier transform of the semicircle density at real time, `J₁(2t)/t`.
pub fn phi<T: Real>(t: T) -> T {
    if (t + t).abs() <= T::lit(BESSEL_SWITCH) {
        series_j1_over_half(t * t)
    } else {
        bessel_j1(t + t) / t
    }
}

/// `∫ ρ_sc(x) f(x) dx` by nested Gauss–Chebyshev quadrature of the second kind.
///
/// The node count doubles until two successive values agree to `tol`
/// relative to `max(1, |I|)`.
pub fn semicircle_integral<T, F>(f: F, tol: T) -> Result<Cx<T>, SemicircleError>
where
    T: Real,
    F: Fn(T) -> Cx<T>,
{
    let two = T::lit(2.0);
    let node = |k: usize, m: usize| -> Cx<T> {
        let theta = T::PI() * T::from_usize(k).unwrap() / T::from_usize(m).unwrap();
        let s = theta.sin();
        f(two * theta.cos()) * (s * s)
    };
    let mut m = FIRST_PANEL;
    let mut sum: Cx<T> = (1..m).map(|k| node(k, m)).fold(Cx::zero(), |a, b| a + b);
    let mut prev = sum * (two / T::from_usize(m).unwrap());
    while m < MAX_PANEL {
        let fine = 2 * m;
        let extra = (1..fine).step_by(2).map(|k| node(k, fine)).fold(Cx::zero(), |a, b| a + b);
        sum = sum + extra;
        m = fine;
        let cur = sum * (two / T::from_usize(m).unwrap());
        if (cur - prev).norm() <= tol * cur.norm().max(T::one()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(SemicircleError::NonConvergence { nodes: m })
}

/// Fourier transform of the semicircle density at a complex argument,
/// `∫ ρ_sc(x) e^{ixz} dx`.
pub fn phi_complex<T: Real>(z: Cx<T>) -> Result<Cx<T>, SemicircleError> {
    let i = cx(T::zero(), T::one());
    semicircle_integral(|x| (i * z * x).exp(), T::quad_tol())
}

/// Divided difference `m[z₁, …, z_k] = ∫ ρ_sc(x) ∏ (x − z_i)⁻¹ dx`,
/// confluent points included.
pub fn divided_difference<T: Real>(zs: &[Cx<T>]) -> Result<Cx<T>, SemicircleError> {
    if zs.is_empty() {
        return Err(SemicircleError::Empty);
    }
    for &z in zs {
        if z.im == T::zero() {
            return Err(on_axis(z));
        }
    }
    if let [z] = zs {
        return m_sc(*z);
    }
    semicircle_integral(
        |x| {
            zs.iter()
                .fold(Cx::one(), |acc: Cx<T>, &z| acc / (cx(x, T::zero()) - z))
        },
        T::quad_tol(),
    )
}
