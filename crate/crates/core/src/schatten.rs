//! Weighted Schatten norms, the size functions built from them and the
//! error envelopes used to judge simulations.

// guards are written negated so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use crate::observable::Observable;
use crate::scalar::Real;
use crate::semicircle::{ell_of, SemicircleError};
use num_complex::Complex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("Schatten index p = {0} is below 2")]
    IndexTooSmall(f64),
    #[error("length scale ℓ = {0} must be positive")]
    NonPositiveEll(f64),
    #[error(transparent)]
    Spectral(#[from] SemicircleError),
}

/// Schatten index `p ∈ [2, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormIndex<T: Real> {
    Finite(T),
    Infinity,
}

impl<T: Real> NormIndex<T> {
    pub fn finite(p: T) -> Result<Self, NormError> {
        if p.is_infinite() {
            return Ok(Self::Infinity);
        }
        if !(p >= T::lit(2.0)) {
            return Err(NormError::IndexTooSmall(p.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self::Finite(p))
    }

    /// `p = 2k`, or `∞` for `k = usize::MAX`.
    pub fn from_order(p: usize) -> Result<Self, NormError> {
        if p == usize::MAX {
            Ok(Self::Infinity)
        } else {
            Self::finite(T::from_usize(p).unwrap())
        }
    }
}

/// Singular values of an `N × N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum<T: Real> {
    values: Vec<T>,
}

impl<T: Real> SingularSpectrum<T> {
    pub fn new(mut values: Vec<T>) -> Self {
        for v in &mut values {
            *v = v.abs();
        }
        Self { values }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn op_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    /// `⟨|A|^p⟩^{1/p}`, the operator norm for `p = ∞`.
    pub fn moment(&self, p: NormIndex<T>) -> T {
        match p {
            NormIndex::Infinity => self.op_norm(),
            NormIndex::Finite(p) => {
                let top = self.op_norm();
                if top == T::zero() {
                    return T::zero();
                }
                let n = T::from_usize(self.n()).unwrap();
                let s = self.values.iter().fold(T::zero(), |a, &v| a + (v / top).powf(p));
                top * (s / n).powf(p.recip())
            }
        }
    }

    /// `⟨|A|²⟩^{1/2} ℓ^{-1/2} + ⟨|A|^p⟩^{1/p} ℓ^{-1/p}`.
    pub fn weighted_norm(&self, p: NormIndex<T>, ell: T) -> Result<T, NormError> {
        if !(ell > T::zero()) {
            return Err(NormError::NonPositiveEll(ell.to_f64().unwrap_or(f64::NAN)));
        }
        let hs = self.moment(NormIndex::Finite(T::lit(2.0))) / ell.sqrt();
        let tail = match p {
            NormIndex::Infinity => self.op_norm(),
            NormIndex::Finite(q) => self.moment(p) / ell.powf(q.recip()),
        };
        Ok(hs + tail)
    }
}

/// Parameters of a weighted norm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNormSpec<T: Real> {
    pub p: NormIndex<T>,
    pub ell: T,
}

/// `|||A|||_{p,ℓ}` of an observable.
pub fn weighted_norm(a: &Observable, spec: WeightedNormSpec<f64>) -> Result<f64, NormError> {
    a.spectrum().weighted_norm(spec.p, spec.ell)
}

/// Size functions of a chain of observables at a common `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeReport<T: Real> {
    /// `1(k ≥ 2) ∏ |||A_i|||_{k,ℓ}`
    pub m: T,
    /// `∏ |||A_i|||_{2k,ℓ}`
    pub s: T,
    /// `∏ |||A_i|||_{∞,ℓ}`
    pub m_iso: T,
    /// `ℓ^{-1/2} ∏ |||A_i|||_{∞,ℓ}`
    pub s_iso: T,
}

impl<T: Real> SizeReport<T> {
    pub fn from_spectra(ell: T, spectra: &[&SingularSpectrum<T>]) -> Result<Self, NormError> {
        let k = spectra.len();
        let prod = |p: NormIndex<T>| -> Result<T, NormError> {
            spectra
                .iter()
                .try_fold(T::one(), |acc, s| Ok(acc * s.weighted_norm(p, ell)?))
        };
        let m = if k >= 2 { prod(NormIndex::from_order(k)?)? } else { T::zero() };
        let s = prod(NormIndex::from_order(2 * k.max(1))?)?;
        let m_iso = prod(NormIndex::Infinity)?;
        if !(ell > T::zero()) {
            return Err(NormError::NonPositiveEll(ell.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { m, s, m_iso, s_iso: m_iso / ell.sqrt() })
    }
}

/// Size functions of observables at `ℓ`.
pub fn size_report(ell: f64, observables: &[&Observable]) -> Result<SizeReport<f64>, NormError> {
    let spectra: Vec<&SingularSpectrum<f64>> = observables.iter().map(|a| a.spectrum()).collect();
    SizeReport::from_spectra(ell, &spectra)
}

/// The two moments of an observable entering the OTOC error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeMoments<T: Real> {
    /// `⟨A²⟩`
    pub second: T,
    /// `⟨A⁸⟩^{1/2}`
    pub eighth_sqrt: T,
}

impl EnvelopeMoments<f64> {
    pub fn of(a: &Observable) -> Self {
        let sp = a.spectrum();
        let second = sp.moment(NormIndex::Finite(2.0)).powi(2);
        let eighth_sqrt = sp.moment(NormIndex::Finite(8.0)).powi(4);
        Self { second, eighth_sqrt }
    }
}

/// `e^{|t|/N^{1/2−ε}} (t⁴⟨A²⟩²/N + |t|⟨A⁸⟩^{1/2}/N)^{1/2} (same for B)^{1/2}`.
pub fn otoc_error_envelope<T: Real>(
    t: T,
    n: usize,
    a: EnvelopeMoments<T>,
    b: EnvelopeMoments<T>,
    eps: T,
) -> T {
    let nf = T::from_usize(n).unwrap();
    let t = t.abs();
    let part = |m: EnvelopeMoments<T>| (t.powi(4) * m.second * m.second / nf + t * m.eighth_sqrt / nf).sqrt();
    (t / nf.powf(T::lit(0.5) - eps)).exp() * part(a) * part(b)
}

/// Averaged local-law envelope `N⁻¹ ∏ |||A_i|||_{2k,ℓ}`.
pub fn local_law_envelope_avg(zs: &[Complex<f64>], observables: &[&Observable]) -> Result<f64, NormError> {
    let ell = ell_of(zs)?;
    let n = observables.first().map_or(1, |a| a.n()) as f64;
    Ok(size_report(ell, observables)?.s / n)
}

/// Isotropic local-law envelope `(Nℓ)^{-1/2} ∏ |||A_i|||_{∞,ℓ}`.
pub fn local_law_envelope_iso(
    zs: &[Complex<f64>],
    observables: &[&Observable],
    n: usize,
) -> Result<f64, NormError> {
    let ell = ell_of(zs)?;
    Ok(size_report(ell, observables)?.m_iso / (n as f64 * ell).sqrt())
}
