//! Deterministic approximation `M_{[1,k]}` of resolvent chains and its bounds.

use crate::linalg::{trace, trace_product};
use crate::nc_comb::{nc_cached, FreeCumulants, NcPartition};
use crate::observable::Observable;
use crate::scalar::pairwise_sum;
use crate::schatten::{NormError, NormIndex};
use crate::semicircle::{ell_of, SemicircleError};
use crate::C64;
use faer::{c64, Mat, MatRef};
use std::collections::HashMap;
use thiserror::Error;

/// Longest chain for which `M` is assembled.
pub const MAX_CHAIN: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MTermError {
    #[error("chain length {0} exceeds {MAX_CHAIN}")]
    TooLong(usize),
    #[error("expected {expected} matrices, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("matrices have inconsistent shapes")]
    Shape,
    #[error("observable {0} is not traceless")]
    NotTraceless(usize),
    #[error(transparent)]
    Spectral(#[from] SemicircleError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// `pTr_π(B₁, …, B_{k−1}) = scalar · matrix`, `matrix = None` meaning the identity.
#[derive(Debug, Clone)]
pub struct PartialTrace {
    pub scalar: c64,
    pub matrix: Option<Mat<c64>>,
}

fn check_square(ms: &[MatRef<'_, c64>]) -> Result<usize, MTermError> {
    let n = ms.first().map_or(0, |m| m.nrows());
    if ms.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(MTermError::Shape);
    }
    Ok(n)
}

fn ordered_product(idx: &[usize], ms: &[MatRef<'_, c64>]) -> Option<Mat<c64>> {
    let (&first, rest) = idx.split_first()?;
    let mut p = ms[first].to_owned();
    for &j in rest {
        p = &p * ms[j];
    }
    Some(p)
}

/// `⟨∏_{j∈S} B_j⟩` with the product in ascending order.
fn block_trace(idx: &[usize], ms: &[MatRef<'_, c64>]) -> c64 {
    let n = ms[idx[0]].nrows() as f64;
    match idx {
        [a] => trace(ms[*a]) / n,
        [head @ .., last] => {
            let p = ordered_product(head, ms).expect("non-empty head");
            trace_product(p.as_ref(), ms[*last]) / n
        }
        [] => c64::new(1.0, 0.0),
    }
}

/// Partial trace of `B₁, …, B_{k−1}` along `π ∈ NC([k])`; the block holding
/// `k` keeps its matrices, every other block is traced.
pub fn partial_trace(pi: &NcPartition, bs: &[MatRef<'_, c64>]) -> Result<PartialTrace, MTermError> {
    let k = pi.k();
    if bs.len() + 1 != k {
        return Err(MTermError::Arity { expected: k.saturating_sub(1), got: bs.len() });
    }
    check_square(bs)?;
    let mut scalar = c64::new(1.0, 0.0);
    let mut matrix = None;
    for b in pi.blocks() {
        if b.contains(&(k - 1)) {
            matrix = ordered_product(&b[..b.len() - 1], bs);
        } else {
            scalar *= block_trace(b, bs);
        }
    }
    Ok(PartialTrace { scalar, matrix })
}

/// `∏_{S∈π} m∘[S]` for the spectral parameters of a chain.
fn cumulant_weight(pi: &NcPartition, zs: &[C64], fc: &mut FreeCumulants<f64>) -> Result<C64, MTermError> {
    let mut w = C64::new(1.0, 0.0);
    for b in pi.blocks() {
        let sub: Vec<C64> = b.iter().map(|&i| zs[i]).collect();
        w *= fc.cumulant(&sub)?;
    }
    Ok(w)
}

/// One term of `⟨M_{[1,k]} A_k⟩`, indexed by `π ∈ NC([k])`.
#[derive(Debug, Clone)]
pub struct ChainSummand {
    pub partition: NcPartition,
    pub weight: C64,
    pub traced: C64,
}

impl ChainSummand {
    #[inline]
    pub fn value(&self) -> C64 {
        self.weight * self.traced
    }
}

/// All summands of `⟨M(z₁, A₁, …, A_{k−1}, z_k) A_k⟩`; `mats` holds `A₁ … A_k`.
pub fn m_chain_summands(zs: &[C64], mats: &[MatRef<'_, c64>]) -> Result<Vec<ChainSummand>, MTermError> {
    let k = zs.len();
    if k > MAX_CHAIN {
        return Err(MTermError::TooLong(k));
    }
    if mats.len() != k {
        return Err(MTermError::Arity { expected: k, got: mats.len() });
    }
    check_square(mats)?;
    let mut fc = FreeCumulants::new();
    let mut traces: HashMap<Vec<usize>, c64> = HashMap::new();
    let mut out = Vec::with_capacity(nc_cached(k).len());
    for pi in nc_cached(k) {
        let weight = cumulant_weight(pi, zs, &mut fc)?;
        let mut traced = c64::new(1.0, 0.0);
        for b in pi.kreweras().blocks() {
            let t = *traces.entry(b.clone()).or_insert_with(|| block_trace(b, mats));
            traced *= t;
        }
        out.push(ChainSummand { partition: pi.clone(), weight, traced });
    }
    Ok(out)
}

/// `⟨M(z₁, A₁, …, A_{k−1}, z_k) A_k⟩`.
pub fn m_chain_traced(zs: &[C64], mats: &[MatRef<'_, c64>]) -> Result<C64, MTermError> {
    let vals: Vec<C64> = m_chain_summands(zs, mats)?.iter().map(ChainSummand::value).collect();
    Ok(pairwise_sum(&vals))
}

/// The matrix `M(z₁, B₁, …, B_{k−1}, z_k)`; `n` fixes the size when `k = 1`.
pub fn m_chain_matrix(zs: &[C64], bs: &[MatRef<'_, c64>], n: usize) -> Result<Mat<c64>, MTermError> {
    let k = zs.len();
    if k > MAX_CHAIN {
        return Err(MTermError::TooLong(k));
    }
    if bs.len() + 1 != k {
        return Err(MTermError::Arity { expected: k.saturating_sub(1), got: bs.len() });
    }
    if !bs.is_empty() && check_square(bs)? != n {
        return Err(MTermError::Shape);
    }
    let mut fc = FreeCumulants::new();
    let mut identity: Vec<C64> = Vec::new();
    let mut out = Mat::<c64>::zeros(n, n);
    for pi in nc_cached(k) {
        let w = cumulant_weight(pi, zs, &mut fc)?;
        let pt = partial_trace(&pi.kreweras(), bs)?;
        let c = w * pt.scalar;
        match pt.matrix {
            None => identity.push(c),
            Some(m) => {
                for j in 0..n {
                    for i in 0..n {
                        out[(i, j)] += c * m[(i, j)];
                    }
                }
            }
        }
    }
    let id = pairwise_sum(&identity);
    for i in 0..n {
        out[(i, i)] += id;
    }
    Ok(out)
}

fn require_traceless(obs: &[&Observable]) -> Result<(), MTermError> {
    match obs.iter().position(|a| !a.is_traceless()) {
        Some(i) => Err(MTermError::NotTraceless(i)),
        None => Ok(()),
    }
}

/// `1(k ≥ 2) · ℓ · ∏ |||A_i|||_{k,ℓ}` for `k` traceless observables.
pub fn m_bound_avg_at(ell: f64, obs: &[&Observable]) -> Result<f64, MTermError> {
    require_traceless(obs)?;
    let k = obs.len();
    if k < 2 {
        return Ok(0.0);
    }
    let p = NormIndex::from_order(k)?;
    obs.iter().try_fold(ell, |acc, a| Ok(acc * a.norm(p, ell)?))
}

/// Averaged bound with `ℓ = min_j η_j ρ_j` over `z₁ … z_k`.
pub fn m_bound_avg(zs: &[C64], obs: &[&Observable]) -> Result<f64, MTermError> {
    m_bound_avg_at(ell_of(zs)?, obs)
}

/// `∏ |||A_i|||_{∞,ℓ}` with `ℓ` over `z₁ … z_{k+1}`.
pub fn m_bound_iso(zs: &[C64], obs: &[&Observable]) -> Result<f64, MTermError> {
    require_traceless(obs)?;
    if zs.len() != obs.len() + 1 {
        return Err(MTermError::Arity { expected: obs.len() + 1, got: zs.len() });
    }
    let ell = ell_of(zs)?;
    obs.iter().try_fold(1.0, |acc, a| Ok(acc * a.norm(NormIndex::Infinity, ell)?))
}

/// Per-partition bound `η^{−(s−1)} ∏_{S∈K(π), |S|≥2} ∏_{j∈S} ⟨|A_j|^{|S|}⟩^{1/|S|}`
/// with `|π| = k + 1 − s` and `η = min_j |Im z_j|`.
pub fn m_bound_strong(pi: &NcPartition, zs: &[C64], obs: &[&Observable]) -> f64 {
    let k = pi.k();
    let s = k + 1 - pi.len();
    let eta = zs.iter().fold(f64::INFINITY, |a, z| a.min(z.im.abs()));
    let mut bound = eta.powi(1 - s as i32);
    for b in pi.kreweras().blocks() {
        if b.len() < 2 {
            continue;
        }
        let p = NormIndex::Finite(b.len() as f64);
        for &j in b {
            bound *= obs[j].spectrum().moment(p);
        }
    }
    bound
}
