//! Wigner ensembles, their eigendecomposition, the Ornstein–Uhlenbeck matrix
//! flow and the characteristic flow of spectral parameters.

use crate::linalg::{self, to_complex};
use crate::observable::{LowRank, LowRankBasis, Observable};
use crate::scalar::{cx, Cx, Real};
use crate::semicircle::{m_sc, SemicircleError};
use faer::{c64, Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("eigendecomposition did not converge")]
    Eigen,
    #[error("characteristic reached the real axis at t = {t}")]
    AxisCrossing { t: f64 },
    #[error("step size {0} is not in (0, 0.01]")]
    BadStep(f64),
    #[error(transparent)]
    Spectral(#[from] SemicircleError),
}

/// What a random stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Matrix = 1,
    OuIncrement = 2,
    FlowIncrement = 3,
    Vector = 4,
    Observable = 5,
    Instance = 6,
}

/// Counter-based generator for the stream `(seed, index, purpose)`.
pub fn stream_rng(seed: u64, index: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    RealSymmetric,
    ComplexHermitian,
}

/// Law of the standardised entries `χ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    Uniform,
}

impl EntryLaw {
    fn real<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::Uniform => (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt(),
        }
    }

    fn complex<R: Rng>(self, rng: &mut R) -> c64 {
        let re = self.real(rng);
        let im = self.real(rng);
        c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WignerSpec {
    pub n: usize,
    pub symmetry: Symmetry,
    pub law: EntryLaw,
    pub seed: u64,
}

impl WignerSpec {
    pub fn gue(n: usize, seed: u64) -> Self {
        Self { n, symmetry: Symmetry::ComplexHermitian, law: EntryLaw::Gaussian, seed }
    }

    pub fn goe(n: usize, seed: u64) -> Self {
        Self { n, symmetry: Symmetry::RealSymmetric, law: EntryLaw::Gaussian, seed }
    }
}

/// A sampled Hermitian matrix, real storage when real symmetric.
#[derive(Debug, Clone)]
pub enum WignerMatrix {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl WignerMatrix {
    pub fn n(&self) -> usize {
        match self {
            WignerMatrix::Real(m) => m.nrows(),
            WignerMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match self {
            WignerMatrix::Real(m) => to_complex(m.as_ref()),
            WignerMatrix::Complex(m) => m.clone(),
        }
    }

    /// `a · self + b · other`; both must share the symmetry class.
    pub fn combine(&self, a: f64, other: &WignerMatrix, b: f64) -> WignerMatrix {
        match (self, other) {
            (WignerMatrix::Real(x), WignerMatrix::Real(y)) => {
                WignerMatrix::Real(Mat::from_fn(x.nrows(), x.ncols(), |i, j| a * x[(i, j)] + b * y[(i, j)]))
            }
            _ => {
                let (x, y) = (self.to_complex(), other.to_complex());
                WignerMatrix::Complex(Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * a + y[(i, j)] * b))
            }
        }
    }
}

fn fill_wigner<R: Rng>(n: usize, symmetry: Symmetry, law: EntryLaw, rng: &mut R) -> WignerMatrix {
    let s = 1.0 / (n as f64).sqrt();
    match symmetry {
        Symmetry::RealSymmetric => {
            let mut m = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                for i in 0..j {
                    let v = law.real(rng) * s;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
                m[(j, j)] = law.real(rng) * s;
            }
            WignerMatrix::Real(m)
        }
        Symmetry::ComplexHermitian => {
            let mut m = Mat::<c64>::zeros(n, n);
            for j in 0..n {
                for i in 0..j {
                    let v = law.complex(rng) * s;
                    m[(i, j)] = v;
                    m[(j, i)] = v.conj();
                }
                m[(j, j)] = c64::new(law.real(rng) * s, 0.0);
            }
            WignerMatrix::Complex(m)
        }
    }
}

/// Sample `index` of the ensemble: off-diagonal `N^{-1/2} χ_od`, diagonal `N^{-1/2} χ_d`.
pub fn sample_wigner(spec: &WignerSpec, index: u64) -> WignerMatrix {
    let mut rng = stream_rng(spec.seed, index, Purpose::Matrix);
    fill_wigner(spec.n, spec.symmetry, spec.law, &mut rng)
}

/// Random unit vector for stream `(seed, index, Vector)`.
pub fn random_unit_vector(n: usize, seed: u64, index: u64, complex: bool) -> Mat<c64> {
    let mut rng = stream_rng(seed, index, Purpose::Vector);
    let mut v = Mat::<c64>::from_fn(n, 1, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if complex { rng.sample(StandardNormal) } else { 0.0 };
        c64::new(re, im)
    });
    let norm = (0..n).map(|i| v[(i, 0)].norm_sqr()).sum::<f64>().sqrt();
    for i in 0..n {
        v[(i, 0)] /= norm;
    }
    v
}

#[derive(Debug, Clone)]
pub enum Eigenvectors {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

/// `W = U diag(λ) U*` with ascending `λ`.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    pub eigenvalues: Vec<f64>,
    pub vectors: Eigenvectors,
}

/// Dense Hermitian eigendecomposition.
pub fn eigendecompose(w: &WignerMatrix) -> Result<SpectralFactorization, EnsembleError> {
    let (eigenvalues, vectors) = match w {
        WignerMatrix::Real(m) => {
            let e = m.self_adjoint_eigen(Side::Lower).map_err(|_| EnsembleError::Eigen)?;
            let s = e.S().column_vector();
            ((0..m.nrows()).map(|i| s[i]).collect::<Vec<_>>(), Eigenvectors::Real(e.U().to_owned()))
        }
        WignerMatrix::Complex(m) => {
            let e = m.self_adjoint_eigen(Side::Lower).map_err(|_| EnsembleError::Eigen)?;
            let s = e.S().column_vector();
            ((0..m.nrows()).map(|i| s[i].re).collect::<Vec<_>>(), Eigenvectors::Complex(e.U().to_owned()))
        }
    };
    if eigenvalues.iter().any(|x| !x.is_finite()) || eigenvalues.windows(2).any(|p| p[0] > p[1]) {
        return Err(EnsembleError::Eigen);
    }
    Ok(SpectralFactorization { eigenvalues, vectors })
}

/// Eigenvalues only.
pub fn eigenvalues(w: &WignerMatrix) -> Result<Vec<f64>, EnsembleError> {
    let v = match w {
        WignerMatrix::Real(m) => m.self_adjoint_eigenvalues(Side::Lower),
        WignerMatrix::Complex(m) => m.self_adjoint_eigenvalues(Side::Lower),
    }
    .map_err(|_| EnsembleError::Eigen)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EnsembleError::Eigen);
    }
    Ok(v)
}

impl SpectralFactorization {
    #[inline]
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_real(&self) -> bool {
        matches!(self.vectors, Eigenvectors::Real(_))
    }

    pub fn vectors_complex(&self) -> Mat<c64> {
        match &self.vectors {
            Eigenvectors::Real(u) => to_complex(u.as_ref()),
            Eigenvectors::Complex(u) => u.clone(),
        }
    }

    /// `U* X`.
    pub fn adjoint_apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        match &self.vectors {
            Eigenvectors::Real(u) => {
                let re = u.transpose() * linalg::real_part(x);
                let im = u.transpose() * linalg::imag_part(x);
                Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
            }
            Eigenvectors::Complex(u) => u.adjoint() * x,
        }
    }

    /// `U* V` for the eigen-factor `V` of an observable.
    pub fn project(&self, lr: &LowRank) -> Mat<c64> {
        match &lr.basis {
            LowRankBasis::Coordinates(idx) => match &self.vectors {
                Eigenvectors::Real(u) => Mat::from_fn(self.n(), idx.len(), |i, c| c64::new(u[(idx[c], i)], 0.0)),
                Eigenvectors::Complex(u) => Mat::from_fn(self.n(), idx.len(), |i, c| u[(idx[c], i)].conj()),
            },
            LowRankBasis::Dense(v) => self.adjoint_apply(v.as_ref()),
        }
    }

    /// `U* A U` in the eigenbasis.
    pub fn rotate(&self, a: &Observable) -> Mat<c64> {
        let n = self.n();
        match (&self.vectors, a.diagonal_entries()) {
            (Eigenvectors::Real(u), Some(d)) => {
                let du = Mat::<f64>::from_fn(n, n, |i, j| d[i] * u[(i, j)]);
                to_complex((u.transpose() * du).as_ref())
            }
            (Eigenvectors::Real(u), None) => {
                let dense = a.dense().expect("dense observable");
                let re = u.transpose() * (linalg::real_part(dense) * u);
                if a.is_real() {
                    return to_complex(re.as_ref());
                }
                let im = u.transpose() * (linalg::imag_part(dense) * u);
                Mat::from_fn(n, n, |i, j| c64::new(re[(i, j)], im[(i, j)]))
            }
            (Eigenvectors::Complex(u), Some(d)) => {
                let du = Mat::<c64>::from_fn(n, n, |i, j| u[(i, j)] * d[i]);
                u.adjoint() * du
            }
            (Eigenvectors::Complex(u), None) => {
                let dense = a.dense().expect("dense observable");
                u.adjoint() * (dense * u)
            }
        }
    }

    /// `U diag(f) U*`.
    pub fn reconstruct(&self, f: &[c64]) -> Mat<c64> {
        let u = self.vectors_complex();
        let uf = Mat::<c64>::from_fn(self.n(), self.n(), |i, j| u[(i, j)] * f[j]);
        uf * u.adjoint()
    }

    /// `(λ_i − z)⁻¹`.
    pub fn resolvent_diag(&self, z: c64) -> Vec<c64> {
        self.eigenvalues.iter().map(|&l| (c64::new(l, 0.0) - z).inv()).collect()
    }
}

/// Exact OU transition `W_t = e^{−t/2} W₀ + √(1 − e^{−t}) G` with a fresh `G`.
pub fn ou_evolve_exact(w0: &WignerMatrix, t: f64, spec: &WignerSpec, index: u64) -> WignerMatrix {
    let mut rng = stream_rng(spec.seed, index, Purpose::OuIncrement);
    let g = fill_wigner(spec.n, spec.symmetry, spec.law, &mut rng);
    w0.combine((-t / 2.0).exp(), &g, (-(-t).exp_m1()).sqrt())
}

/// Euler–Maruyama discretisation of `dW = −W/2 dt + N^{-1/2} dB`.
#[derive(Debug, Clone)]
pub struct OuPath {
    w: WignerMatrix,
    spec: WignerSpec,
    rng: ChaCha20Rng,
    h: f64,
    steps: usize,
}

impl OuPath {
    pub fn new(w0: WignerMatrix, spec: &WignerSpec, index: u64, h: f64) -> Result<Self, EnsembleError> {
        if !(h > 0.0 && h <= 0.01) {
            return Err(EnsembleError::BadStep(h));
        }
        Ok(Self { w: w0, spec: *spec, rng: stream_rng(spec.seed, index, Purpose::FlowIncrement), h, steps: 0 })
    }

    pub fn step(&mut self) {
        let g = fill_wigner(self.spec.n, self.spec.symmetry, self.spec.law, &mut self.rng);
        self.w = self.w.combine(1.0 - self.h / 2.0, &g, self.h.sqrt());
        self.steps += 1;
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.h
    }

    pub fn matrix(&self) -> &WignerMatrix {
        &self.w
    }
}

/// Options of the adaptive RK4 integrator for `ż = −m(z) − z/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharOptions<T: Real> {
    pub tol: T,
    pub axis_guard: T,
    pub initial_step: T,
}

impl<T: Real> Default for CharOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9).max(T::epsilon() * T::lit(100.0)),
            axis_guard: T::lit(1e-6),
            initial_step: T::lit(1e-2),
        }
    }
}

/// Accepted steps of a characteristic.
#[derive(Debug, Clone, PartialEq)]
pub struct CharTrajectory<T: Real> {
    pub times: Vec<T>,
    pub z: Vec<Cx<T>>,
    pub eta: Vec<T>,
    pub rho: Vec<T>,
    pub ell: Vec<T>,
}

impl<T: Real> CharTrajectory<T> {
    fn push(&mut self, t: T, z: Cx<T>) -> Result<(), EnsembleError> {
        let rho = m_sc(z)?.im.abs() / T::PI();
        self.times.push(t);
        self.z.push(z);
        self.eta.push(z.im.abs());
        self.rho.push(rho);
        self.ell.push(z.im.abs() * rho);
        Ok(())
    }

    pub fn last(&self) -> Cx<T> {
        *self.z.last().expect("trajectory holds its start point")
    }
}

fn velocity<T: Real>(z: Cx<T>) -> Result<Cx<T>, SemicircleError> {
    Ok(-m_sc(z)? - z * T::lit(0.5))
}

fn rk4<T: Real>(z: Cx<T>, h: T, side: T, guard: T) -> Option<Cx<T>> {
    let half = T::lit(0.5);
    let ok = |w: Cx<T>| w.im * side > guard;
    let k1 = velocity(z).ok()?;
    let z2 = z + k1 * (h * half);
    if !ok(z2) {
        return None;
    }
    let k2 = velocity(z2).ok()?;
    let z3 = z + k2 * (h * half);
    if !ok(z3) {
        return None;
    }
    let k3 = velocity(z3).ok()?;
    let z4 = z + k3 * h;
    if !ok(z4) {
        return None;
    }
    let k4 = velocity(z4).ok()?;
    let out = z + (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (h / T::lit(6.0));
    ok(out).then_some(out)
}

fn axis_error<T: Real>(t: T) -> EnsembleError {
    EnsembleError::AxisCrossing { t: t.to_f64().unwrap_or(f64::NAN) }
}

/// Integrates the characteristic from `z0` over `[0, t_end]` (`t_end < 0` runs backwards).
pub fn integrate_characteristic<T: Real>(
    z0: Cx<T>,
    t_end: T,
    opts: CharOptions<T>,
) -> Result<CharTrajectory<T>, EnsembleError> {
    let side = z0.im.signum();
    if z0.im.abs() <= opts.axis_guard {
        return Err(axis_error(T::zero()));
    }
    let mut traj = CharTrajectory { times: vec![], z: vec![], eta: vec![], rho: vec![], ell: vec![] };
    traj.push(T::zero(), z0)?;
    let dir = if t_end < T::zero() { -T::one() } else { T::one() };
    let span = t_end.abs();
    let mut t = T::zero();
    let mut z = z0;
    let mut h = opts.initial_step.min(span);
    let min_step = T::epsilon() * T::lit(16.0) * span.max(T::one());
    while t < span {
        h = h.min(span - t);
        if h <= min_step {
            return Err(axis_error(t * dir));
        }
        let full = rk4(z, h * dir, side, opts.axis_guard);
        let halves = rk4(z, h * dir * T::lit(0.5), side, opts.axis_guard)
            .and_then(|m| rk4(m, h * dir * T::lit(0.5), side, opts.axis_guard));
        let (Some(full), Some(fine)) = (full, halves) else {
            h = h * T::lit(0.25);
            continue;
        };
        let err = (fine - full).norm() / T::lit(15.0);
        let scale = opts.tol * fine.norm().max(T::one());
        if err <= scale {
            t = if span - (t + h) <= min_step { span } else { t + h };
            z = fine + (fine - full) / T::lit(15.0);
            if z.im * side <= opts.axis_guard {
                return Err(axis_error(t * dir));
            }
            traj.push(t * dir, z)?;
        }
        let factor = if err == T::zero() {
            T::lit(2.0)
        } else {
            (T::lit(0.9) * (scale / err).powf(T::lit(0.2))).min(T::lit(2.0)).max(T::lit(0.2))
        };
        h = h * factor;
    }
    Ok(traj)
}

/// Positions of the characteristic from `z0` at the given monotone times.
pub fn characteristic_at_times<T: Real>(
    z0: Cx<T>,
    times: &[T],
    opts: CharOptions<T>,
) -> Result<Vec<Cx<T>>, EnsembleError> {
    let mut out = Vec::with_capacity(times.len());
    let mut z = z0;
    let mut t = T::zero();
    for &target in times {
        if target != t {
            z = integrate_characteristic(z, target - t, opts)?.last();
            t = target;
        }
        out.push(z);
    }
    Ok(out)
}

/// Backward shooting: the `z₀` whose characteristic reaches `z_target` at time `t_final`.
pub fn shoot_initial_condition<T: Real>(z_target: Cx<T>, t_final: T) -> Result<Cx<T>, EnsembleError> {
    Ok(integrate_characteristic(z_target, -t_final, CharOptions::default())?.last())
}

/// Measured constant `c = dist(z₀, [−2, 2]) / T` of a backward shot.
pub fn shooting_constant<T: Real>(z_target: Cx<T>, t_final: T) -> Result<T, EnsembleError> {
    let z0 = shoot_initial_condition(z_target, t_final)?;
    let two = T::lit(2.0);
    let dx = if z0.re.abs() > two { z0.re.abs() - two } else { T::zero() };
    Ok(cx(dx, z0.im).norm() / t_final)
}

/// Random Hermitian observable with `⟨|A|²⟩ ≈ 1` for stream `(seed, index, Observable)`.
pub fn random_hermitian_observable(n: usize, seed: u64, index: u64, traceless: bool) -> Observable {
    let mut rng = stream_rng(seed, index, Purpose::Observable);
    let WignerMatrix::Complex(mut m) = fill_wigner(n, Symmetry::ComplexHermitian, EntryLaw::Gaussian, &mut rng) else {
        unreachable!("complex symmetry yields complex storage")
    };
    // a random diagonal shift keeps ⟨A⟩ generic before optional centring
    let shift: f64 = rng.sample(StandardNormal);
    for i in 0..n {
        m[(i, i)] += c64::new(shift, 0.0);
    }
    if traceless {
        let tr = linalg::trace(m.as_ref()) / n as f64;
        for i in 0..n {
            m[(i, i)] -= tr;
        }
    }
    Observable::hermitian(m).expect("construction is Hermitian")
}
