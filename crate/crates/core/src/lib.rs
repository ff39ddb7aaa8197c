//! Numerical laboratory for out-of-time-ordered correlators (OTOCs) of
//! Wigner random matrices.
//!
//! The analytic side (semicircle law, free cumulants, deterministic
//! approximations of resolvent chains, Schatten-type size functions and the
//! leading OTOC formulas) is checked against sampled Wigner matrices.

pub mod chains;
pub mod ensemble;
pub mod expcli;
mod linalg;
pub mod mterm;
pub mod nc_comb;
pub mod observable;
pub mod otoc;
pub mod quadrature;
pub mod scalar;
pub mod schatten;
pub mod semicircle;
pub mod stats;

pub use faer::c64;
pub use observable::Observable;
pub use scalar::{Cx, Real};

/// Complex double.
pub type C64 = num_complex::Complex<f64>;
/// Complex single.
pub type C32 = num_complex::Complex<f32>;
/// Spectral parameter in double precision.
pub type SpectralParam64 = semicircle::SpectralParam<f64>;
/// Spectral parameter in single precision.
pub type SpectralParam32 = semicircle::SpectralParam<f32>;
/// Free-cumulant table in double precision.
pub type FreeCumulants64 = nc_comb::FreeCumulants<f64>;
/// Singular spectrum in double precision.
pub type SingularSpectrum64 = schatten::SingularSpectrum<f64>;
/// Characteristic trajectory in double precision.
pub type CharTrajectory64 = ensemble::CharTrajectory<f64>;
/// OTOC moment set in double precision.
pub type MomentSet64 = otoc::MomentSet<f64>;
