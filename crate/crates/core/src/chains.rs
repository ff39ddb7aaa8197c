//! Resolvent chains evaluated in the eigenbasis, their local-law residuals and
//! the structural identities used in the zig-zag argument.

use crate::ensemble::{
    characteristic_at_times, eigendecompose, sample_wigner, shoot_initial_condition, CharOptions, EnsembleError,
    OuPath, SpectralFactorization, WignerMatrix, WignerSpec,
};
use crate::linalg::{max_abs, trace};
use crate::mterm::{m_chain_traced, MTermError};
use crate::observable::Observable;
use crate::quadrature::composite_gauss_legendre;
use crate::schatten::{local_law_envelope_avg, local_law_envelope_iso, size_report, NormError};
use crate::semicircle::{ell_of, m_sc, SemicircleError};
use crate::C64;
use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("expected {expected} spectral parameters, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("Nℓ = {nl:.3} is below N^ε = {floor:.3}")]
    BelowScale { nl: f64, floor: f64 },
    #[error("contour pinched between {0} and {1}")]
    ContourPinch(C64, C64),
    #[error("contour quadrature did not stabilise with {0} nodes")]
    ContourNonConvergence(usize),
    #[error("quadrature for |G| did not converge")]
    AbsNonConvergence,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    MTerm(#[from] MTermError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Spectral(#[from] SemicircleError),
}

/// Spectral parameters and observables of a chain.
#[derive(Debug, Clone)]
pub struct ChainSpec<'a> {
    pub zs: Vec<C64>,
    pub observables: Vec<&'a Observable>,
}

/// Observables rotated once into the eigenbasis of one sample.
pub struct ChainEvaluator<'a> {
    fact: &'a SpectralFactorization,
    rotated: Vec<Mat<c64>>,
    slot: Vec<usize>,
}

impl<'a> ChainEvaluator<'a> {
    pub fn new(fact: &'a SpectralFactorization, observables: &[&Observable]) -> Self {
        let mut rotated = Vec::new();
        let mut slot = Vec::with_capacity(observables.len());
        let mut seen: Vec<*const Observable> = Vec::new();
        for &a in observables {
            let p = a as *const Observable;
            match seen.iter().position(|&q| q == p) {
                Some(i) => slot.push(i),
                None => {
                    seen.push(p);
                    rotated.push(fact.rotate(a));
                    slot.push(rotated.len() - 1);
                }
            }
        }
        Self { fact, rotated, slot }
    }

    #[inline]
    fn obs(&self, i: usize) -> MatRef<'_, c64> {
        self.rotated[self.slot[i]].as_ref()
    }

    /// `⟨G(z₁) A₁ ⋯ G(z_k) A_k⟩`.
    pub fn avg(&self, zs: &[C64]) -> Result<C64, ChainError> {
        let k = self.slot.len();
        if zs.len() != k {
            return Err(ChainError::Arity { expected: k, got: zs.len() });
        }
        let n = self.fact.n();
        let g: Vec<Vec<c64>> = zs.iter().map(|&z| self.fact.resolvent_diag(z)).collect();
        let closing = |p: MatRef<'_, c64>| -> C64 {
            let a = self.obs(k - 1);
            let mut s = c64::new(0.0, 0.0);
            for j in 0..n {
                let mut col = c64::new(0.0, 0.0);
                for i in 0..n {
                    col += p[(j, i)] * a[(i, j)];
                }
                s += col;
            }
            s / n as f64
        };
        match k {
            0 => Ok(c64::new(1.0, 0.0)),
            1 => {
                let a = self.obs(0);
                Ok((0..n).map(|i| g[0][i] * a[(i, i)]).sum::<c64>() / n as f64)
            }
            _ => {
                // P = D₁ Ã₁ D₂ ⋯ Ã_{k−1} D_k, then ⟨P Ã_k⟩
                let a0 = self.obs(0);
                let mut p = Mat::<c64>::from_fn(n, n, |i, j| g[0][i] * a0[(i, j)] * g[1][j]);
                for (step, gi) in g.iter().enumerate().skip(2) {
                    let prod = &p * self.obs(step - 1);
                    p = Mat::from_fn(n, n, |i, j| prod[(i, j)] * gi[j]);
                }
                Ok(closing(p.as_ref()))
            }
        }
    }

    /// `⟨x, G(z₁) A₁ ⋯ A_k G(z_{k+1}) y⟩`.
    pub fn iso(&self, zs: &[C64], x: MatRef<'_, c64>, y: MatRef<'_, c64>) -> Result<C64, ChainError> {
        let k = self.slot.len();
        if zs.len() != k + 1 {
            return Err(ChainError::Arity { expected: k + 1, got: zs.len() });
        }
        let n = self.fact.n();
        let xt = self.fact.adjoint_apply(x);
        let yt = self.fact.adjoint_apply(y);
        let g0 = self.fact.resolvent_diag(zs[0]);
        let mut row: Vec<c64> = (0..n).map(|i| xt[(i, 0)].conj() * g0[i]).collect();
        for (step, &z) in zs.iter().enumerate().skip(1) {
            let a = self.obs(step - 1);
            let g = self.fact.resolvent_diag(z);
            row = (0..n)
                .map(|j| (0..n).map(|i| row[i] * a[(i, j)]).sum::<c64>() * g[j])
                .collect();
        }
        Ok((0..n).map(|i| row[i] * yt[(i, 0)]).sum())
    }
}

/// `⟨G₁A₁ ⋯ G_kA_k⟩` for one sample.
pub fn avg_chain(fact: &SpectralFactorization, spec: &ChainSpec<'_>) -> Result<C64, ChainError> {
    ChainEvaluator::new(fact, &spec.observables).avg(&spec.zs)
}

/// `⟨x, G₁A₁ ⋯ A_kG_{k+1} y⟩` for one sample.
pub fn iso_chain(
    fact: &SpectralFactorization,
    spec: &ChainSpec<'_>,
    x: MatRef<'_, c64>,
    y: MatRef<'_, c64>,
) -> Result<C64, ChainError> {
    ChainEvaluator::new(fact, &spec.observables).iso(&spec.zs, x, y)
}

/// Deterministic side of a local-law comparison, computed once per configuration.
#[derive(Debug, Clone)]
pub struct LocalLawTarget {
    pub n: usize,
    pub ell: f64,
    /// `⟨M A_k⟩` for averaged chains; `M` as a matrix for isotropic ones.
    pub prediction: Prediction,
    pub envelope: f64,
}

#[derive(Debug, Clone)]
pub enum Prediction {
    Averaged(C64),
    Isotropic(Mat<c64>),
}

/// Residual of one sample against its deterministic prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLawResidual {
    pub value: C64,
    pub prediction: C64,
    pub residual: f64,
    pub envelope: f64,
    pub ratio: f64,
}

fn check_scale(n: usize, ell: f64, eps: f64) -> Result<(), ChainError> {
    let nl = n as f64 * ell;
    let floor = (n as f64).powf(eps);
    if nl < floor {
        return Err(ChainError::BelowScale { nl, floor });
    }
    Ok(())
}

impl LocalLawTarget {
    /// Averaged chain of length `k = zs.len()`; rejects `Nℓ < N^ε`.
    pub fn averaged(spec: &ChainSpec<'_>, eps: f64) -> Result<Self, ChainError> {
        let n = spec.observables.first().map_or(0, |a| a.n());
        let ell = ell_of(&spec.zs)?;
        check_scale(n, ell, eps)?;
        let dense: Vec<Mat<c64>> = spec.observables.iter().map(|a| a.to_dense()).collect();
        let refs: Vec<MatRef<'_, c64>> = dense.iter().map(|m| m.as_ref()).collect();
        Ok(Self {
            n,
            ell,
            prediction: Prediction::Averaged(m_chain_traced(&spec.zs, &refs)?),
            envelope: local_law_envelope_avg(&spec.zs, &spec.observables)?,
        })
    }

    /// Isotropic chain with `k + 1 = zs.len()` resolvents.
    pub fn isotropic(spec: &ChainSpec<'_>, n: usize, eps: f64) -> Result<Self, ChainError> {
        let ell = ell_of(&spec.zs)?;
        check_scale(n, ell, eps)?;
        let dense: Vec<Mat<c64>> = spec.observables.iter().map(|a| a.to_dense()).collect();
        let refs: Vec<MatRef<'_, c64>> = dense.iter().map(|m| m.as_ref()).collect();
        Ok(Self {
            n,
            ell,
            prediction: Prediction::Isotropic(crate::mterm::m_chain_matrix(&spec.zs, &refs, n)?),
            envelope: local_law_envelope_iso(&spec.zs, &spec.observables, n)?,
        })
    }

    fn judge(&self, value: C64, prediction: C64) -> LocalLawResidual {
        let residual = (value - prediction).norm();
        LocalLawResidual { value, prediction, residual, envelope: self.envelope, ratio: residual / self.envelope }
    }

    pub fn residual_avg(&self, eval: &ChainEvaluator<'_>, zs: &[C64]) -> Result<LocalLawResidual, ChainError> {
        let Prediction::Averaged(p) = self.prediction else {
            return Err(ChainError::Arity { expected: 0, got: zs.len() });
        };
        Ok(self.judge(eval.avg(zs)?, p))
    }

    pub fn residual_iso(
        &self,
        eval: &ChainEvaluator<'_>,
        zs: &[C64],
        x: MatRef<'_, c64>,
        y: MatRef<'_, c64>,
    ) -> Result<LocalLawResidual, ChainError> {
        let Prediction::Isotropic(m) = &self.prediction else {
            return Err(ChainError::Arity { expected: 0, got: zs.len() });
        };
        let my = m * y;
        let p: C64 = (0..self.n).map(|i| x[(i, 0)].conj() * my[(i, 0)]).sum();
        Ok(self.judge(eval.iso(zs, x, y)?, p))
    }
}

/// Averaged local-law residual of one sample.
pub fn local_law_residual(
    fact: &SpectralFactorization,
    spec: &ChainSpec<'_>,
    eps: f64,
) -> Result<LocalLawResidual, ChainError> {
    let target = LocalLawTarget::averaged(spec, eps)?;
    target.residual_avg(&ChainEvaluator::new(fact, &spec.observables), &spec.zs)
}

/// Relative defect of the Ward identity `G G* = Im G / η` in matrix form.
pub fn ward_check(fact: &SpectralFactorization, z: C64) -> f64 {
    let g = fact.resolvent_diag(z);
    let gm = fact.reconstruct(&g);
    let lhs = &gm * gm.adjoint();
    let n = fact.n();
    let rhs = Mat::<c64>::from_fn(n, n, |i, j| (gm[(i, j)] - gm[(j, i)].conj()) / c64::new(0.0, 2.0 * z.im));
    let diff = Mat::<c64>::from_fn(n, n, |i, j| lhs[(i, j)] - rhs[(i, j)]);
    max_abs(diff.as_ref()) / max_abs(rhs.as_ref())
}

/// Both sides of `⟨ImG(z) Q G(w) R ImG(z) R* G(w)* Q*⟩ ≤ N ⟨ImG(z) Q |G(w)| Q*⟩ ⟨ImG(z) R* |G(w)| R⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub fn reduction_check(
    fact: &SpectralFactorization,
    z: C64,
    w: C64,
    q: &Observable,
    r: &Observable,
) -> ReductionCheck {
    let n = fact.n();
    let img: Vec<c64> = fact.resolvent_diag(z).iter().map(|g| c64::new(g.im, 0.0)).collect();
    let gw = fact.resolvent_diag(w);
    let absg: Vec<c64> = gw.iter().map(|g| c64::new(g.norm(), 0.0)).collect();
    let qt = fact.rotate(q);
    let rt = fact.rotate(r);
    let scale_rows = |d: &[c64], m: &Mat<c64>| Mat::<c64>::from_fn(n, n, |i, j| d[i] * m[(i, j)]);
    let gw_conj: Vec<c64> = gw.iter().map(|g| g.conj()).collect();
    // ImG Q G R ImG R* G* Q*
    let left = scale_rows(&img, &qt) * scale_rows(&gw, &rt);
    let right = scale_rows(&img, &rt.adjoint().to_owned()) * scale_rows(&gw_conj, &qt.adjoint().to_owned());
    let lhs = trace((&left * &right).as_ref()).re / n as f64;
    let a = trace((scale_rows(&img, &qt) * scale_rows(&absg, &qt.adjoint().to_owned())).as_ref()).re / n as f64;
    let b = trace((scale_rows(&img, &rt.adjoint().to_owned()) * scale_rows(&absg, &rt)).as_ref()).re / n as f64;
    let rhs = n as f64 * a * b;
    ReductionCheck { lhs, rhs, ratio: lhs / rhs }
}

/// Largest entry of `|G(z)| − (2/π) ∫₀^∞ Im G(E + i√(η² + v²)) (η² + v²)^{-1/2} dv`.
///
/// The eigenbasis evaluates `|G|`; the integrand uses direct solves with `W − ζ`.
pub fn abs_g_check(w: &WignerMatrix, fact: &SpectralFactorization, z: C64) -> Result<f64, ChainError> {
    let n = fact.n();
    let wm = w.to_complex();
    let eta = z.im.abs();
    let absg: Vec<c64> = fact.resolvent_diag(z).iter().map(|g| c64::new(g.norm(), 0.0)).collect();
    let exact = fact.reconstruct(&absg);
    let identity = Mat::<c64>::identity(n, n);
    // v = η tan θ turns the integrand into (2/π) Im G(E + iη sec θ) sec θ on [0, π/2)
    let integral = |panels: usize| -> Mat<c64> {
        let (nodes, weights) = composite_gauss_legendre(0.0, std::f64::consts::FRAC_PI_2, panels, 16);
        let mut acc = Mat::<c64>::zeros(n, n);
        for (&th, &wt) in nodes.iter().zip(&weights) {
            let sec = th.cos().recip();
            let zeta = c64::new(z.re, eta * sec);
            let shifted = Mat::<c64>::from_fn(n, n, |i, j| wm[(i, j)] - if i == j { zeta } else { c64::new(0.0, 0.0) });
            let g = shifted.partial_piv_lu().solve(&identity);
            let f = wt * sec * std::f64::consts::FRAC_2_PI;
            for j in 0..n {
                for i in 0..n {
                    let img = (g[(i, j)] - g[(j, i)].conj()) / c64::new(0.0, 2.0);
                    acc[(i, j)] += img * f;
                }
            }
        }
        acc
    };
    let mut panels = 4;
    let mut prev = integral(panels);
    while panels < 4096 {
        panels *= 2;
        let cur = integral(panels);
        let change = max_abs(Mat::<c64>::from_fn(n, n, |i, j| cur[(i, j)] - prev[(i, j)]).as_ref());
        prev = cur;
        if change < 1e-11 {
            let diff = Mat::<c64>::from_fn(n, n, |i, j| prev[(i, j)] - exact[(i, j)]);
            return Ok(max_abs(diff.as_ref()));
        }
    }
    Err(ChainError::AbsNonConvergence)
}

/// Contour used to linearise `G(z_i) G(z_j)` when both lie in one half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    /// Horizontal distance of the vertical sides from the spectral parameters.
    pub margin: f64,
    pub initial_nodes: usize,
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self { margin: 1.0, initial_nodes: 256, tol: 1e-8, max_nodes: 1 << 16 }
    }
}

/// `G_i G_j ≈ Σ_q w_q G(ζ_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationRule {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl LinearizationRule {
    /// Scalar weight `Σ_q w_q / (λ − ζ_q)` acting on an eigenvalue.
    pub fn apply(&self, lambda: f64) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&zeta, &w)| w / (C64::new(lambda, 0.0) - zeta))
            .sum()
    }
}

fn rectangle_rule(zi: C64, zj: C64, spec: &ContourSpec, per_side: usize) -> LinearizationRule {
    let side = zi.im.signum();
    let lo = zi.im.abs().min(zj.im.abs()) / 2.0;
    let hi = zi.im.abs().max(zj.im.abs()) + spec.margin;
    let xl = zi.re.min(zj.re) - spec.margin;
    let xr = zi.re.max(zj.re) + spec.margin;
    // counter-clockwise around z_i, z_j in the upper half-plane
    let mut corners = [C64::new(xl, lo), C64::new(xr, lo), C64::new(xr, hi), C64::new(xl, hi)];
    if side < 0.0 {
        for c in &mut corners {
            *c = c.conj();
        }
        corners.reverse();
    }
    let panels = (per_side / 16).max(1);
    let (s, w) = composite_gauss_legendre(0.0, 1.0, panels, 16);
    let mut nodes = Vec::with_capacity(4 * s.len());
    let mut weights = Vec::with_capacity(4 * s.len());
    let two_pi_i = C64::new(0.0, 2.0 * std::f64::consts::PI);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for (&si, &wi) in s.iter().zip(&w) {
            let zeta = a + (b - a) * si;
            nodes.push(zeta);
            weights.push((b - a) * wi / ((zeta - zi) * (zeta - zj) * two_pi_i));
        }
    }
    LinearizationRule { nodes, weights }
}

/// Linearisation of `G(z_i) G(z_j)`.
///
/// Opposite half-planes use `(G_i − G_j)/(z_i − z_j)`; otherwise a rectangle
/// around both points is refined until its scalar weight is stable on `[−3, 3]`.
pub fn linearize_pair(zi: C64, zj: C64, spec: &ContourSpec) -> Result<LinearizationRule, ChainError> {
    if zi.im == 0.0 || zj.im == 0.0 {
        return Err(ChainError::ContourPinch(zi, zj));
    }
    if zi.im.signum() != zj.im.signum() {
        let d = zi - zj;
        return Ok(LinearizationRule { nodes: vec![zi, zj], weights: vec![d.inv(), -d.inv()] });
    }
    if zi.im.abs().min(zj.im.abs()) < 1e-8 {
        return Err(ChainError::ContourPinch(zi, zj));
    }
    let probes: Vec<f64> = (0..=120).map(|i| -3.0 + 0.05 * i as f64).collect();
    let mut per_side = spec.initial_nodes / 4;
    let mut prev = rectangle_rule(zi, zj, spec, per_side);
    while 4 * per_side < spec.max_nodes {
        per_side *= 2;
        let cur = rectangle_rule(zi, zj, spec, per_side);
        let change = probes
            .iter()
            .map(|&l| (cur.apply(l) - prev.apply(l)).norm() / cur.apply(l).norm().max(1.0))
            .fold(0.0, f64::max);
        prev = cur;
        if change < spec.tol {
            return Ok(prev);
        }
    }
    Err(ChainError::ContourNonConvergence(4 * per_side))
}

/// `⟨(G_t(z_t) − m(z_t)) A⟩` along a flow, with the matching envelope `𝔰₁(ℓ_t)/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrack {
    pub times: Vec<f64>,
    pub z: Vec<C64>,
    pub deviation: Vec<C64>,
    pub envelope: Vec<f64>,
}

impl FlowTrack {
    pub fn terminal_ratio(&self) -> f64 {
        let i = self.times.len() - 1;
        self.deviation[i].norm() / self.envelope[i]
    }
}

/// Co-evolves an OU path (step `h`) and the characteristic ending at
/// `z_target` at time `t_final`, recording every `record_every` steps.
pub fn flow_deviation_track(
    spec: &WignerSpec,
    index: u64,
    z_target: C64,
    a: &Observable,
    t_final: f64,
    h: f64,
    record_every: usize,
) -> Result<FlowTrack, ChainError> {
    let steps = (t_final / h).round() as usize;
    let h = if steps == 0 { h } else { t_final / steps as f64 };
    let z0 = shoot_initial_condition(z_target, t_final)?;
    let step_times: Vec<f64> = (0..=steps).map(|s| s as f64 * h).collect();
    let zpath = characteristic_at_times(z0, &step_times, CharOptions::default())?;
    let mut path = OuPath::new(sample_wigner(spec, index), spec, index, h)?;
    let n = spec.n as f64;
    let tr = a.normalized_trace();
    let mut track = FlowTrack { times: vec![], z: vec![], deviation: vec![], envelope: vec![] };
    for s in 0..=steps {
        if s % record_every.max(1) == 0 || s == steps {
            let zt = zpath[s];
            let fact = eigendecompose(path.matrix())?;
            let gm = ChainEvaluator::new(&fact, &[a]).avg(&[zt])?;
            let ell = ell_of(&[zt])?;
            track.times.push(step_times[s]);
            track.z.push(zt);
            track.deviation.push(gm - m_sc(zt)? * tr);
            track.envelope.push(size_report(ell, &[a])?.s / n);
        }
        if s < steps {
            path.step();
        }
    }
    Ok(track)
}
