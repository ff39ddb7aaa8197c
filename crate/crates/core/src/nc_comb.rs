//! Non-crossing partitions, the Kreweras complement and free cumulants of
//! the semicircle divided differences.
//!
//! Elements of `[k]` are stored 0-based; [`NcPartition`]'s `Display` prints
//! them 1-based.

use crate::scalar::{pairwise_sum, Cx, Real};
use crate::semicircle::{divided_difference, SemicircleError};
use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Largest `k` for which [`enumerate_nc`] runs.
pub const MAX_ENUM_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CombError {
    #[error("NC enumeration requested for k = {0}, limit is {MAX_ENUM_K}")]
    TooLarge(usize),
    #[error("blocks do not partition 0..{0}")]
    NotAPartition(usize),
    #[error("partition is crossing")]
    Crossing,
}

/// A non-crossing partition of `{0, …, k-1}`; blocks ascending, ordered by minimum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NcPartition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

impl NcPartition {
    /// Validates and normalises a set of blocks.
    pub fn new(k: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self, CombError> {
        let mut seen = vec![false; k];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(CombError::NotAPartition(k));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= k || seen[i] {
                    return Err(CombError::NotAPartition(k));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CombError::NotAPartition(k));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        let p = Self { k, blocks };
        if p.crosses() {
            return Err(CombError::Crossing);
        }
        Ok(p)
    }

    /// All singletons.
    pub fn singletons(k: usize) -> Self {
        Self { k, blocks: (0..k).map(|i| vec![i]).collect() }
    }

    /// A single block.
    pub fn full(k: usize) -> Self {
        Self { k, blocks: vec![(0..k).collect()] }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Number of blocks.
    #[inline]
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Index of the block containing `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(&i))
            .expect("element belongs to the ground set")
    }

    fn labels(&self) -> Vec<usize> {
        let mut lab = vec![0; self.k];
        for (bi, b) in self.blocks.iter().enumerate() {
            for &i in b {
                lab[i] = bi;
            }
        }
        lab
    }

    fn crosses(&self) -> bool {
        let lab = self.labels();
        let k = self.k;
        for a in 0..k {
            for b in a + 1..k {
                for c in b + 1..k {
                    if lab[a] == lab[b] || lab[a] != lab[c] {
                        continue;
                    }
                    for d in c + 1..k {
                        if lab[b] == lab[d] {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Kreweras complement.
    ///
    /// Dual point `i'` sits between `i` and `i + 1` on the circle; two dual
    /// points share a block iff the chord joining them meets no block of `self`.
    pub fn kreweras(&self) -> NcPartition {
        let k = self.k;
        let lab = self.labels();
        // chord (i', j') with i < j separates {i+1, …, j} from the rest
        let separable = |i: usize, j: usize| -> bool {
            let inside = |x: usize| x > i && x <= j;
            (0..k).all(|x| (0..k).all(|y| lab[x] != lab[y] || inside(x) == inside(y)))
        };
        let mut assigned = vec![usize::MAX; k];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in 0..k {
            if assigned[i] != usize::MAX {
                continue;
            }
            let bi = blocks.len();
            let mut b = vec![i];
            assigned[i] = bi;
            for (j, slot) in assigned.iter_mut().enumerate().skip(i + 1) {
                if *slot == usize::MAX && separable(i, j) {
                    *slot = bi;
                    b.push(j);
                }
            }
            blocks.push(b);
        }
        NcPartition { k, blocks }
    }
}

impl fmt::Display for NcPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (bi, b) in self.blocks.iter().enumerate() {
            if bi > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, i) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", i + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// Catalan number `C_k`.
pub fn catalan(k: usize) -> u64 {
    (0..k as u64).fold(1u64, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

/// Non-crossing partitions of an interval of `n` consecutive points, as block lists.
fn nc_interval(n: usize) -> Vec<Vec<Vec<usize>>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    // the block of point 0 is {0 = a₀ < a₁ < … < a_m}; each gap is independent
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << (n - 1)) {
        let mut first = vec![0usize];
        for j in 1..n {
            if mask & (1 << (j - 1)) != 0 {
                first.push(j);
            }
        }
        let mut gaps: Vec<(usize, usize)> = Vec::new();
        for w in first.windows(2) {
            if w[1] > w[0] + 1 {
                gaps.push((w[0] + 1, w[1] - w[0] - 1));
            }
        }
        let last = *first.last().unwrap();
        if last + 1 < n {
            gaps.push((last + 1, n - last - 1));
        }
        let mut partial: Vec<Vec<Vec<usize>>> = vec![vec![first.clone()]];
        for &(off, len) in &gaps {
            let sub = nc_interval(len);
            let mut next = Vec::with_capacity(partial.len() * sub.len());
            for p in &partial {
                for s in &sub {
                    let mut q = p.clone();
                    q.extend(s.iter().map(|b| b.iter().map(|x| x + off).collect::<Vec<_>>()));
                    next.push(q);
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    out
}

/// All non-crossing partitions of `[k]` in lexicographic block order.
pub fn enumerate_nc(k: usize) -> Result<Vec<NcPartition>, CombError> {
    if k > MAX_ENUM_K {
        return Err(CombError::TooLarge(k));
    }
    let mut all: Vec<NcPartition> = nc_interval(k)
        .into_iter()
        .map(|mut blocks| {
            blocks.sort_unstable_by_key(|b| b[0]);
            NcPartition { k, blocks }
        })
        .collect();
    all.sort();
    Ok(all)
}

pub(crate) fn nc_cached(k: usize) -> &'static [NcPartition] {
    static CACHE: OnceLock<Vec<Vec<NcPartition>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=9).map(|j| enumerate_nc(j).unwrap()).collect());
    &cache[k]
}

/// Memoised free cumulants `m∘[S]` of the semicircle divided differences.
///
/// Keys are the ordered bit patterns of the spectral parameters.
#[derive(Debug, Default)]
pub struct FreeCumulants<T: Real> {
    cumulants: HashMap<Vec<(u64, u64)>, Cx<T>>,
    moments: HashMap<Vec<(u64, u64)>, Cx<T>>,
}

fn key_of<T: Real>(zs: &[Cx<T>]) -> Vec<(u64, u64)> {
    zs.iter().map(|z| (z.re.key(), z.im.key())).collect()
}

impl<T: Real> FreeCumulants<T> {
    pub fn new() -> Self {
        Self { cumulants: HashMap::new(), moments: HashMap::new() }
    }

    /// `m[S]`, memoised.
    pub fn moment(&mut self, zs: &[Cx<T>]) -> Result<Cx<T>, SemicircleError> {
        let key = key_of(zs);
        if let Some(v) = self.moments.get(&key) {
            return Ok(*v);
        }
        let v = divided_difference(zs)?;
        self.moments.insert(key, v);
        Ok(v)
    }

    /// `m∘[S] = m[S] − Σ_{π ∈ NC(S), |π| ≥ 2} ∏_{B ∈ π} m∘[B]`.
    pub fn cumulant(&mut self, zs: &[Cx<T>]) -> Result<Cx<T>, SemicircleError> {
        assert!(zs.len() <= 9, "free cumulants are tabulated up to |S| = 9");
        let key = key_of(zs);
        if let Some(v) = self.cumulants.get(&key) {
            return Ok(*v);
        }
        let mut terms = vec![self.moment(zs)?];
        for pi in nc_cached(zs.len()) {
            if pi.len() < 2 {
                continue;
            }
            let mut prod = Cx::new(T::one(), T::zero());
            for b in pi.blocks() {
                let sub: Vec<Cx<T>> = b.iter().map(|&i| zs[i]).collect();
                prod = prod * self.cumulant(&sub)?;
            }
            terms.push(-prod);
        }
        let v = pairwise_sum(&terms);
        self.cumulants.insert(key, v);
        Ok(v)
    }

    /// Reassembles `m[S]` from cumulants over all of `NC(S)`.
    pub fn moment_from_cumulants(&mut self, zs: &[Cx<T>]) -> Result<Cx<T>, SemicircleError> {
        let mut terms = Vec::new();
        for pi in nc_cached(zs.len()) {
            let mut prod = Cx::new(T::one(), T::zero());
            for b in pi.blocks() {
                let sub: Vec<Cx<T>> = b.iter().map(|&i| zs[i]).collect();
                prod = prod * self.cumulant(&sub)?;
            }
            terms.push(prod);
        }
        Ok(pairwise_sum(&terms))
    }
}
