//! Truncated spectra of weak Laplacians and the operators built on them:
//! closed-form heat diffusion, slope-normalized eigenvalues and scale-invariant
//! heat kernel signatures.

mod eigen;
mod heat;
mod sihks;

pub use eigen::{eigendecompose, eigendecompose_with, EigenOptions};
pub use heat::{heat_diffuse, normalize_eigenvalues};
pub use sihks::{sihks, sihks_with, SihksOptions};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Mass attached to a basis: the lumped mesh matrix, or a single value shared
/// by every sample point.
#[derive(Debug, Clone, PartialEq)]
pub enum Mass {
    Diagonal(Vec<f64>),
    Scalar(f64),
}

impl Mass {
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Mass::Diagonal(d) => d[i],
            Mass::Scalar(s) => *s,
        }
    }

    /// `M * Y`.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Mass::Scalar(s) => y * *s,
            Mass::Diagonal(d) => {
                let mut out = y.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                out
            }
        }
    }

    pub fn total(&self, n: usize) -> f64 {
        match self {
            Mass::Diagonal(d) => d.iter().sum(),
            Mass::Scalar(s) => s * n as f64,
        }
    }
}

/// The `K` smallest eigenpairs of a generalized problem `L phi = lambda M phi`.
///
/// Eigenvalues ascend and eigenvectors are `M`-orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    mass: Mass,
}

impl SpectralBasis {
    pub fn new(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>, mass: Mass) -> Result<Self> {
        if eigenvectors.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: eigenvectors.ncols(),
            });
        }
        if let Mass::Diagonal(d) = &mass {
            if d.len() != eigenvectors.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: eigenvectors.nrows(),
                    got: d.len(),
                });
            }
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
            mass,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn mass(&self) -> &Mass {
        &self.mass
    }

    /// Number of points the basis is defined on.
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Truncation order `K`.
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Keeps the first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, k).into_owned(),
            mass: self.mass.clone(),
        }
    }

    /// Same eigenvalues on a different point set (e.g. resampled eigenvectors).
    pub fn with_vectors(&self, eigenvectors: DMatrix<f64>, mass: Mass) -> Result<Self> {
        Self::new(self.eigenvalues.clone(), eigenvectors, mass)
    }

    /// Per-channel mass-weighted mean of a field.
    pub fn weighted_mean(&self, y: &DMatrix<f64>) -> Vec<f64> {
        let total = self.mass.total(self.dim());
        let my = self.mass.apply(y);
        my.column_iter().map(|c| c.sum() / total).collect()
    }

    /// `M`-norm of each channel.
    pub fn m_norms(&self, y: &DMatrix<f64>) -> Vec<f64> {
        let my = self.mass.apply(y);
        y.column_iter()
            .zip(my.column_iter())
            .map(|(a, b)| a.dot(&b).sqrt())
            .collect()
    }
}
