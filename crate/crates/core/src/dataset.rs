use crate::error::{GpcaError, Result};
use crate::linalg::Mat;
use crate::spd::{spd_sqrt, SpdMatrix};

/// A list of covariance matrices of a common dimension, with their square
/// roots precomputed.
#[derive(Debug, Clone)]
pub struct GaussianDataset {
    dim: usize,
    matrices: Vec<SpdMatrix>,
    roots: Vec<SpdMatrix>,
}

impl GaussianDataset {
    /// Requires at least two matrices, all of the same dimension.
    pub fn new(matrices: Vec<SpdMatrix>) -> Result<Self> {
        if matrices.len() < 2 {
            return Err(GpcaError::InvalidDataset(format!(
                "at least 2 matrices are required, got {}",
                matrices.len()
            )));
        }
        let dim = matrices[0].dim();
        for (index, m) in matrices.iter().enumerate() {
            if m.dim() != dim {
                return Err(GpcaError::InvalidMatrix {
                    index,
                    source: Box::new(GpcaError::DimensionMismatch {
                        expected: dim,
                        got: m.dim(),
                    }),
                });
            }
        }
        let roots = matrices.iter().map(spd_sqrt).collect();
        Ok(GaussianDataset { dim, matrices, roots })
    }

    /// Validates raw matrices; failures name the offending index.
    pub fn from_matrices(raw: Vec<Mat>) -> Result<Self> {
        let matrices = raw
            .into_iter()
            .enumerate()
            .map(|(index, m)| {
                SpdMatrix::new(m).map_err(|e| GpcaError::InvalidMatrix {
                    index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(matrices)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[SpdMatrix] {
        &self.matrices
    }

    pub fn roots(&self) -> &[SpdMatrix] {
        &self.roots
    }

    pub fn root(&self, i: usize) -> &Mat {
        self.roots[i].matrix()
    }

    /// `Σ_i ‖Σ_i^{1/2}‖²`, a squared length scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.matrices.iter().map(|m| m.trace()).sum()
    }
}
