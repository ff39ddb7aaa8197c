//! Deterministic observables with cached spectral data.

use crate::linalg;
use crate::schatten::{NormError, NormIndex, SingularSpectrum};
use faer::{c64, Mat, MatRef, Side};
use std::sync::OnceLock;
use thiserror::Error;

/// Relative threshold below which eigenvalues are dropped from a low-rank factor.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("matrix is {0}×{1}, expected square")]
    NotSquare(usize, usize),
    #[error("observable is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("eigendecomposition of the observable failed")]
    Eigen,
}

#[derive(Debug, Clone)]
enum Repr {
    Diagonal(Vec<f64>),
    Dense(Mat<c64>),
}

/// Eigen-factor `A = V diag(α) V*` restricted to nonzero `α`.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub values: Vec<f64>,
    pub basis: LowRankBasis,
}

#[derive(Debug, Clone)]
pub enum LowRankBasis {
    /// Columns are the standard basis vectors at these positions.
    Coordinates(Vec<usize>),
    Dense(Mat<c64>),
}

impl LowRank {
    #[inline]
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `V* x` for an `N × m` block.
    pub fn adjoint_apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        match &self.basis {
            LowRankBasis::Coordinates(idx) => Mat::from_fn(idx.len(), x.ncols(), |r, c| x[(idx[r], c)]),
            LowRankBasis::Dense(v) => v.adjoint() * x,
        }
    }
}

/// An `N × N` deterministic matrix.
#[derive(Debug)]
pub struct Observable {
    n: usize,
    repr: Repr,
    hermitian: bool,
    spectrum: OnceLock<SingularSpectrum<f64>>,
    low_rank: OnceLock<Result<LowRank, ObservableError>>,
}

impl Clone for Observable {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            repr: self.repr.clone(),
            hermitian: self.hermitian,
            spectrum: self.spectrum.clone(),
            low_rank: self.low_rank.clone(),
        }
    }
}

impl Observable {
    /// Wraps a dense matrix; Hermitian-ness is detected to `1e-12 · max|A|`.
    pub fn new(matrix: Mat<c64>) -> Result<Self, ObservableError> {
        let (r, c) = (matrix.nrows(), matrix.ncols());
        if r != c {
            return Err(ObservableError::NotSquare(r, c));
        }
        let scale = linalg::max_abs(matrix.as_ref()).max(f64::MIN_POSITIVE);
        let hermitian = linalg::hermitian_defect(matrix.as_ref()) <= 1e-12 * scale;
        Ok(Self {
            n: r,
            repr: Repr::Dense(matrix),
            hermitian,
            spectrum: OnceLock::new(),
            low_rank: OnceLock::new(),
        })
    }

    /// A dense Hermitian observable; rejects non-Hermitian input.
    pub fn hermitian(matrix: Mat<c64>) -> Result<Self, ObservableError> {
        let scale = linalg::max_abs(matrix.as_ref()).max(f64::MIN_POSITIVE);
        let a = Self::new(matrix)?;
        if !a.hermitian {
            let defect = match &a.repr {
                Repr::Dense(m) => linalg::hermitian_defect(m.as_ref()),
                Repr::Diagonal(_) => 0.0,
            };
            return Err(ObservableError::NotHermitian(defect / scale));
        }
        Ok(a)
    }

    /// A real diagonal observable, stored without materialising the matrix.
    pub fn diagonal(entries: Vec<f64>) -> Self {
        Self {
            n: entries.len(),
            repr: Repr::Diagonal(entries),
            hermitian: true,
            spectrum: OnceLock::new(),
            low_rank: OnceLock::new(),
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn diagonal_entries(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Diagonal(d) => Some(d),
            Repr::Dense(_) => None,
        }
    }

    pub fn dense(&self) -> Option<MatRef<'_, c64>> {
        match &self.repr {
            Repr::Dense(m) => Some(m.as_ref()),
            Repr::Diagonal(_) => None,
        }
    }

    /// Materialised matrix.
    pub fn to_dense(&self) -> Mat<c64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Diagonal(d) => Mat::from_fn(self.n, self.n, |i, j| {
                if i == j {
                    c64::new(d[i], 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            }),
        }
    }

    /// Real entries only.
    pub fn is_real(&self) -> bool {
        match &self.repr {
            Repr::Diagonal(_) => true,
            Repr::Dense(m) => linalg::is_real(m.as_ref()),
        }
    }

    /// `⟨A⟩ = N⁻¹ Tr A`.
    pub fn normalized_trace(&self) -> c64 {
        let tr = match &self.repr {
            Repr::Diagonal(d) => c64::new(d.iter().sum(), 0.0),
            Repr::Dense(m) => linalg::trace(m.as_ref()),
        };
        tr / self.n as f64
    }

    fn max_entry(&self) -> f64 {
        match &self.repr {
            Repr::Diagonal(d) => d.iter().fold(0.0f64, |a, b| a.max(b.abs())),
            Repr::Dense(m) => linalg::max_abs(m.as_ref()),
        }
    }

    /// `|Tr A| ≤ 10⁻¹² · N · max|A_ij|`.
    pub fn is_traceless(&self) -> bool {
        (self.normalized_trace() * self.n as f64).norm() <= 1e-12 * self.n as f64 * self.max_entry()
    }

    /// Singular values, computed once.
    pub fn spectrum(&self) -> &SingularSpectrum<f64> {
        self.spectrum.get_or_init(|| match &self.repr {
            Repr::Diagonal(d) => SingularSpectrum::new(d.clone()),
            Repr::Dense(m) if self.hermitian => SingularSpectrum::new(
                m.self_adjoint_eigenvalues(Side::Lower).expect("Hermitian eigenvalues converge"),
            ),
            Repr::Dense(m) => SingularSpectrum::new(m.singular_values().expect("SVD converges")),
        })
    }

    /// `|||A|||_{p,ℓ}`.
    pub fn norm(&self, p: NormIndex<f64>, ell: f64) -> Result<f64, NormError> {
        self.spectrum().weighted_norm(p, ell)
    }

    /// `‖A‖`.
    pub fn op_norm(&self) -> f64 {
        self.spectrum().op_norm()
    }

    /// Eigen-factor with zero eigenvalues dropped; Hermitian observables only.
    pub fn low_rank(&self) -> Result<&LowRank, ObservableError> {
        self.low_rank
            .get_or_init(|| {
                if !self.hermitian {
                    return Err(ObservableError::NotHermitian(f64::NAN));
                }
                match &self.repr {
                    Repr::Diagonal(d) => {
                        let top = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                        let idx: Vec<usize> = (0..d.len()).filter(|&i| d[i].abs() > RANK_TOL * top).collect();
                        Ok(LowRank {
                            values: idx.iter().map(|&i| d[i]).collect(),
                            basis: LowRankBasis::Coordinates(idx),
                        })
                    }
                    Repr::Dense(m) => {
                        let e = m.self_adjoint_eigen(Side::Lower).map_err(|_| ObservableError::Eigen)?;
                        let s = e.S().column_vector();
                        let u = e.U();
                        let top = (0..self.n).fold(0.0f64, |a, i| a.max(s[i].re.abs()));
                        let keep: Vec<usize> = (0..self.n).filter(|&i| s[i].re.abs() > RANK_TOL * top).collect();
                        let v = Mat::from_fn(self.n, keep.len(), |r, c| u[(r, keep[c])]);
                        Ok(LowRank {
                            values: keep.iter().map(|&i| s[i].re).collect(),
                            basis: LowRankBasis::Dense(v),
                        })
                    }
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}
