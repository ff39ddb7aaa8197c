//! Floating-point abstraction for the analytic parts of the crate.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real scalar usable by the analytic routines (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    /// Relative stopping tolerance used by the adaptive quadratures.
    #[inline]
    fn quad_tol() -> Self {
        Self::lit(1e-10).max(Self::epsilon() * Self::lit(100.0))
    }

    /// Stable key for memoisation tables; every finite `f32` widens exactly to `f64`.
    #[inline]
    fn key(self) -> u64 {
        self.to_f64().map_or(u64::MAX, f64::to_bits)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type Cx<T> = Complex<T>;

#[inline]
pub(crate) fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

/// Pairwise summation of a slice of values.
pub fn pairwise_sum<T>(v: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + num_traits::Zero,
{
    match v.len() {
        0 => T::zero(),
        1 => v[0],
        n if n <= 8 => v.iter().fold(T::zero(), |a, &b| a + b),
        n => {
            let (l, r) = v.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}
