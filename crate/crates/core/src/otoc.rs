//! OTOCs: the leading deterministic formulas, their sampled counterparts,
//! finite-temperature variants, the spectral form factor and the time-scale
//! estimators.

use crate::ensemble::SpectralFactorization;
use crate::observable::{LowRank, LowRankBasis, Observable, ObservableError};
use crate::scalar::{cx, Real};
use crate::semicircle::{phi, phi_complex, SemicircleError};
use faer::{c64, Mat, MatRef};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtocError {
    #[error("supports of sizes {ra} and {rb} do not fit in N = {n}")]
    SupportOverlap { n: usize, ra: usize, rb: usize },
    #[error("observables have sizes {0} and {1}")]
    SizeMismatch(usize, usize),
    #[error("⟨ABAB⟩ has imaginary part {0:e}")]
    ComplexMoment(f64),
    #[error("exponent {0} outside (0, 1]")]
    BadExponent(f64),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Spectral(#[from] SemicircleError),
}

/// Traces entering the OTOC formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet<T: Real> {
    /// `⟨A²⟩`
    pub a2: T,
    /// `⟨B²⟩`
    pub b2: T,
    /// `⟨AB⟩`
    pub ab: T,
    /// `⟨A²B²⟩`
    pub a2b2: T,
    /// `⟨ABAB⟩`
    pub abab: T,
}

impl<T: Real> MomentSet<T> {
    /// Thermal value `⟨A²⟩⟨B²⟩`.
    #[inline]
    pub fn thermal(&self) -> T {
        self.a2 * self.b2
    }
}

/// `V_A* V_B` for two eigen-factors.
fn overlap(a: &LowRank, b: &LowRank, n: usize) -> Mat<c64> {
    match (&a.basis, &b.basis) {
        (LowRankBasis::Coordinates(ia), LowRankBasis::Coordinates(ib)) => {
            Mat::from_fn(ia.len(), ib.len(), |p, q| c64::new(if ia[p] == ib[q] { 1.0 } else { 0.0 }, 0.0))
        }
        (LowRankBasis::Coordinates(ia), LowRankBasis::Dense(vb)) => {
            Mat::from_fn(ia.len(), vb.ncols(), |p, q| vb[(ia[p], q)])
        }
        (LowRankBasis::Dense(va), LowRankBasis::Coordinates(ib)) => {
            Mat::from_fn(va.ncols(), ib.len(), |p, q| va[(ib[q], p)].conj())
        }
        (LowRankBasis::Dense(va), LowRankBasis::Dense(vb)) => {
            debug_assert_eq!(va.nrows(), n);
            va.adjoint() * vb
        }
    }
}

fn scale_rows(d: &[f64], m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i])
}

fn trace_of(m: MatRef<'_, c64>) -> c64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn trace_prod(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> c64 {
    let mut s = c64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// `N⁻¹ Tr(α Y β² Y*)` and `N⁻¹ Tr(α Y β Y* α Y β Y*)` for `Y` of size `r_A × r_B`.
fn otoc_traces(alpha: &[f64], beta: &[f64], y: MatRef<'_, c64>, n: usize) -> (f64, c64) {
    let mut d = 0.0;
    for q in 0..y.ncols() {
        for p in 0..y.nrows() {
            d += alpha[p] * alpha[p] * beta[q] * beta[q] * y[(p, q)].norm_sqr();
        }
    }
    // Z = α Y β Y*
    let yb = Mat::<c64>::from_fn(y.nrows(), y.ncols(), |p, q| y[(p, q)] * beta[q]);
    let z = scale_rows(alpha, (yb * y.adjoint()).as_ref());
    let f = trace_prod(z.as_ref(), z.as_ref());
    (d / n as f64, f / n as f64)
}

/// `⟨AB⟩`, `⟨A²B²⟩`, `⟨ABAB⟩`, `⟨A²⟩`, `⟨B²⟩` through the eigen-factors.
pub fn moment_set(a: &Observable, b: &Observable) -> Result<MomentSet<f64>, OtocError> {
    if a.n() != b.n() {
        return Err(OtocError::SizeMismatch(a.n(), b.n()));
    }
    let n = a.n();
    let (la, lb) = (a.low_rank()?, b.low_rank()?);
    let k = overlap(la, lb, n);
    let nf = n as f64;
    let mut ab = 0.0;
    for q in 0..k.ncols() {
        for p in 0..k.nrows() {
            ab += la.values[p] * lb.values[q] * k[(p, q)].norm_sqr();
        }
    }
    let (a2b2, abab) = otoc_traces(&la.values, &lb.values, k.as_ref(), n);
    let a4 = la.values.iter().map(|v| v.powi(4)).sum::<f64>() / nf;
    let b4 = lb.values.iter().map(|v| v.powi(4)).sum::<f64>() / nf;
    if abab.im.abs() > 1e-10 * (a4 * b4).sqrt().max(f64::MIN_POSITIVE) {
        return Err(OtocError::ComplexMoment(abab.im));
    }
    Ok(MomentSet {
        a2: la.values.iter().map(|v| v * v).sum::<f64>() / nf,
        b2: lb.values.iter().map(|v| v * v).sum::<f64>() / nf,
        ab: ab / nf,
        a2b2,
        abab: abab.re,
    })
}

/// `⟨A²⟩⟨B²⟩[1 − φ²] + 2⟨AB⟩²φ²[φ(2t) − φ²] + ⟨A²B²⟩φ² − ⟨ABAB⟩φ⁴`.
pub fn theoretical_otoc<T: Real>(m: &MomentSet<T>, ts: &[T]) -> Vec<T> {
    let two = T::lit(2.0);
    ts.iter()
        .map(|&t| {
            let p = phi(t);
            let p2 = p * p;
            m.thermal() * (T::one() - p2) + two * m.ab * m.ab * p2 * (phi(two * t) - p2) + m.a2b2 * p2
                - m.abab * p2 * p2
        })
        .collect()
}

/// Leading OTOC at inverse temperature `β`.
pub fn theoretical_otoc_beta<T: Real>(m: &MomentSet<T>, ts: &[T], beta: T) -> Result<Vec<T>, OtocError> {
    let two = T::lit(2.0);
    let phi_ib = phi_complex(cx(T::zero(), beta))?.re;
    ts.iter()
        .map(|&t| {
            let p = phi(t);
            let p2 = p * p;
            let p_tb = phi_complex(cx(t, beta))?;
            let p_2tb = phi_complex(cx(two * t, beta))?;
            let mixed = (p_tb * phi(two * t) + p_2tb * p - p_tb * (two * p2)).re;
            Ok(m.thermal() * (T::one() - p2) + m.ab * m.ab * (p / phi_ib) * mixed + m.a2b2 * p2
                - m.abab * p2 * p * p_tb.re / phi_ib)
        })
        .collect()
}

/// `⟨A²⟩²[1 − φ²{1 − 2φ(2t) + 2φ²}] + ⟨A⁴⟩[φ² − φ⁴]` for `A = B`.
pub fn example1_theory<T: Real>(a2: T, a4: T, ts: &[T]) -> Vec<T> {
    let two = T::lit(2.0);
    ts.iter()
        .map(|&t| {
            let p2 = phi(t).powi(2);
            a2 * a2 * (T::one() - p2 * (T::one() - two * phi(two * t) + two * p2)) + a4 * (p2 - p2 * p2)
        })
        .collect()
}

/// `⟨A²⟩⟨B²⟩[1 − φ²]` for disjointly supported observables.
pub fn example2_theory<T: Real>(a2: T, b2: T, ts: &[T]) -> Vec<T> {
    ts.iter().map(|&t| a2 * b2 * (T::one() - phi(t).powi(2))).collect()
}

/// Largest even integer not exceeding `N^a`.
pub fn support_size(n: usize, a: f64) -> Result<usize, OtocError> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(OtocError::BadExponent(a));
    }
    let r = ((n as f64).powf(a) + 1e-9).floor() as usize;
    Ok(r.min(n) & !1)
}

/// `A = N^{(1−a)/2} diag(±1)` on the first `⌊N^a⌋` slots and
/// `B = N^{(1−b)/2} diag(±1)` on the last `⌊N^b⌋` slots (both rounded down to even).
pub fn build_example_observables(n: usize, a: f64, b: f64) -> Result<(Observable, Observable), OtocError> {
    let ra = support_size(n, a)?;
    let rb = support_size(n, b)?;
    if ra + rb > n {
        return Err(OtocError::SupportOverlap { n, ra, rb });
    }
    let (sa, sb) = ((n as f64).powf((1.0 - a) / 2.0), (n as f64).powf((1.0 - b) / 2.0));
    let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    for (i, d) in da.iter_mut().take(ra).enumerate() {
        *d = sa * sign(i);
    }
    for i in 0..rb {
        db[n - rb + i] = sb * sign(i);
    }
    Ok((Observable::diagonal(da), Observable::diagonal(db)))
}

/// The Example 1 observable `A = N^{(1−a)/2} diag(±1)` on the first `⌊N^a⌋` slots.
pub fn build_example1_observable(n: usize, a: f64) -> Result<Observable, OtocError> {
    let ra = support_size(n, a)?;
    let sa = (n as f64).powf((1.0 - a) / 2.0);
    Ok(Observable::diagonal(
        (0..n).map(|i| if i < ra { if i % 2 == 0 { sa } else { -sa } } else { 0.0 }).collect(),
    ))
}

/// One time point of a sampled OTOC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtocPoint {
    pub t: f64,
    /// `⟨A(t)²B²⟩`
    pub d: f64,
    /// `⟨A(t)BA(t)B⟩`
    pub f: c64,
    pub c: f64,
}

struct Projected<'a> {
    lambda: &'a [f64],
    alpha: &'a [f64],
    beta: &'a [f64],
    p: Mat<c64>,
    q: Mat<c64>,
}

impl<'a> Projected<'a> {
    fn new(fact: &'a SpectralFactorization, a: &'a Observable, b: &'a Observable) -> Result<Self, OtocError> {
        let (la, lb) = (a.low_rank()?, b.low_rank()?);
        Ok(Self {
            lambda: &fact.eigenvalues,
            alpha: &la.values,
            beta: &lb.values,
            p: fact.project(la),
            q: fact.project(lb),
        })
    }

    /// `P* diag(w_i e^{iλ_i t}) Q`.
    fn y(&self, t: f64, w: Option<&[f64]>) -> Mat<c64> {
        let q = &self.q;
        let scaled = Mat::<c64>::from_fn(q.nrows(), q.ncols(), |i, j| {
            let e = c64::cis(self.lambda[i] * t);
            q[(i, j)] * w.map_or(e, |w| e * w[i])
        });
        self.p.adjoint() * scaled
    }
}

/// `𝒞(t) = ⟨A(t)²B²⟩ − ⟨A(t)BA(t)B⟩` for one sample, `A(t) = e^{−iWt} A e^{iWt}`.
pub fn empirical_otoc(
    fact: &SpectralFactorization,
    a: &Observable,
    b: &Observable,
    ts: &[f64],
) -> Result<Vec<OtocPoint>, OtocError> {
    let pr = Projected::new(fact, a, b)?;
    let n = fact.n();
    Ok(ts
        .iter()
        .map(|&t| {
            let y = pr.y(t, None);
            let (d, f) = otoc_traces(pr.alpha, pr.beta, y.as_ref(), n);
            OtocPoint { t, d, f, c: d - f.re }
        })
        .collect())
}

/// `𝒞^β(t) = ½ Tr(|[A(t), B]|² e^{−βW}) / Tr e^{−βW}` for one sample.
pub fn empirical_otoc_beta(
    fact: &SpectralFactorization,
    a: &Observable,
    b: &Observable,
    ts: &[f64],
    beta: f64,
) -> Result<Vec<f64>, OtocError> {
    let pr = Projected::new(fact, a, b)?;
    let lmin = fact.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = fact.eigenvalues.iter().map(|l| (-beta * (l - lmin)).exp()).collect();
    let z: f64 = w.iter().sum();
    let (alpha, bet) = (pr.alpha, pr.beta);
    let r_a = pr.p.adjoint() * scale_rows(&w, pr.p.as_ref());
    let r_b = pr.q.adjoint() * scale_rows(&w, pr.q.as_ref());
    let diag_scale = |m: MatRef<'_, c64>, l: &[f64], r: &[f64]| {
        Mat::<c64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * l[i] * r[j])
    };
    let alpha2: Vec<f64> = alpha.iter().map(|x| x * x).collect();
    let beta2: Vec<f64> = bet.iter().map(|x| x * x).collect();
    let ones_a = vec![1.0; alpha.len()];
    let ones_b = vec![1.0; bet.len()];
    Ok(ts
        .iter()
        .map(|&t| {
            let y = pr.y(t, None);
            let yh = y.adjoint().to_owned();
            // S* = P* Ω e^{iΛt} Q
            let s_adj = pr.y(t, Some(&w));
            let s = s_adj.adjoint().to_owned();
            // T1 = Tr(α R_A α · Y β² Y*)
            let ar_a = diag_scale(r_a.as_ref(), alpha, alpha);
            let yb2y = diag_scale(y.as_ref(), &ones_a, &beta2) * &yh;
            let t1 = trace_prod(ar_a.as_ref(), yb2y.as_ref());
            // T2 = Tr(β R_B β · Y* α² Y)
            let br_b = diag_scale(r_b.as_ref(), bet, bet);
            let ya2y = diag_scale(yh.as_ref(), &ones_b, &alpha2) * &y;
            let t2 = trace_prod(br_b.as_ref(), ya2y.as_ref());
            // T3 = Tr(S α Y β Y* α Y β)
            let ayb = diag_scale(y.as_ref(), alpha, bet);
            let yha = diag_scale(yh.as_ref(), &ones_b, alpha);
            let yb = diag_scale(y.as_ref(), &ones_a, bet);
            let t3 = trace_of((&s * &ayb * &yha * &yb).as_ref());
            // T4 = Tr(S* β Y* α Y β Y* α)
            let byha = diag_scale(yh.as_ref(), bet, alpha);
            let t4 = trace_of((&s_adj * &byha * &yb * &yha).as_ref());
            ((t1 + t2 - t3 - t4) / (2.0 * z)).re
        })
        .collect())
}

/// `r₂(t) = φ(t)² + 1/N − (1/N)(1 − t/(2N)) 1(t ≤ 2N)`.
pub fn sff_closed_form<T: Real>(t: T, n: usize) -> T {
    let nf = T::from_usize(n).unwrap();
    let ramp = if t <= T::lit(2.0) * nf { (T::one() - t / (T::lit(2.0) * nf)) / nf } else { T::zero() };
    phi(t).powi(2) + nf.recip() - ramp
}

/// `|N⁻¹ Σ_i e^{itλ_i}|²` for one spectrum.
pub fn sff_sample(eigenvalues: &[f64], t: f64) -> f64 {
    let s: c64 = eigenvalues.iter().map(|&l| c64::cis(t * l)).sum();
    (s / eigenvalues.len() as f64).norm_sqr()
}

/// `E⟨A(t)B⟩ = ⟨A⟩⟨B⟩ + (N²r₂ − 1)/(N² − 1) · (⟨AB⟩ − ⟨A⟩⟨B⟩)` for GUE and commuting `A, B`.
pub fn gue_overlap_prediction<T: Real>(tr_a: T, tr_b: T, tr_ab: T, t: T, n: usize) -> T {
    let n2 = T::from_usize(n * n).unwrap();
    tr_a * tr_b + (n2 * sff_closed_form(t, n) - T::one()) / (n2 - T::one()) * (tr_ab - tr_a * tr_b)
}

/// `⟨A(t)B⟩` for one sample.
pub fn empirical_overlap(fact: &SpectralFactorization, a: &Observable, b: &Observable, ts: &[f64]) -> Vec<c64> {
    let at = fact.rotate(a);
    let bt = fact.rotate(b);
    let n = fact.n();
    ts.iter()
        .map(|&t| {
            let e: Vec<c64> = fact.eigenvalues.iter().map(|&l| c64::cis(-l * t)).collect();
            let mut s = c64::new(0.0, 0.0);
            for j in 0..n {
                for i in 0..n {
                    s += at[(i, j)] * e[i] * e[j].conj() * bt[(j, i)];
                }
            }
            s / n as f64
        })
        .collect()
}

/// Relative slack under which two heights count as the same maximum.
pub const PEAK_TIE: f64 = 1e-3;

/// `t_*`: earliest time on `[0, 5]` where the curve comes within
/// `PEAK_TIE` (relative) of its maximum there, with that maximum.
pub fn estimate_scrambling_time(ts: &[f64], curve: &[f64]) -> Option<(f64, f64)> {
    let window = || ts.iter().zip(curve).filter(|(t, _)| (0.0..=5.0).contains(*t));
    let peak = window().map(|(_, &c)| c).reduce(f64::max)?;
    let cut = peak - PEAK_TIE * peak.abs();
    window().find(|(_, &c)| c >= cut).map(|(&t, _)| (t, peak))
}

/// `t_**`: last exit of the curve from the band `thermal · (1 ± δ)`, interpolated
/// linearly; the grid start if the curve never leaves, `None` if it ends outside.
pub fn estimate_relaxation_time(ts: &[f64], curve: &[f64], thermal: f64, delta: f64) -> Option<f64> {
    let (lo, hi) = (thermal * (1.0 - delta), thermal * (1.0 + delta));
    let inside = |c: f64| c >= lo && c <= hi;
    if !inside(*curve.last()?) {
        return None;
    }
    let Some(i) = (0..curve.len()).rev().find(|&i| !inside(curve[i])) else {
        return Some(ts[0]);
    };
    let edge = if curve[i] > hi { hi } else { lo };
    let frac = (edge - curve[i]) / (curve[i + 1] - curve[i]);
    Some(ts[i] + frac * (ts[i + 1] - ts[i]))
}
