//! Block-diagonal Markov operators `I_{|Z|} ⊗ block` and the softmax /
//! log-sum-exp kernels used by the DCA target.
//!
//! Operators act on z-major stacked vectors and are always applied block by
//! block; the `n_z * rows × n_z * cols` matrix is never formed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::prob::JointXY;

/// Relative singular-value cutoff for the pseudo-inverse.
pub const DEFAULT_RCOND: f64 = 1e-12;

/// Stacked vector indexed by `(z, c)` at `z * n_cols + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMajorVector {
    values: Vec<f64>,
    n_z: usize,
    n_cols: usize,
}

impl ZMajorVector {
    pub fn new(values: Vec<f64>, n_z: usize) -> Result<Self> {
        if n_z == 0 || values.is_empty() || !values.len().is_multiple_of(n_z) {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} cannot be split into {n_z} z-blocks",
                values.len()
            )));
        }
        let n_cols = values.len() / n_z;
        Ok(Self {
            values,
            n_z,
            n_cols,
        })
    }

    pub fn zeros(n_z: usize, n_cols: usize) -> Self {
        Self {
            values: vec![0.0; n_z * n_cols],
            n_z,
            n_cols,
        }
    }

    /// From a matrix with rows indexed by `z`.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n_z, n_cols) = m.shape();
        let values = (0..n_z)
            .flat_map(|z| (0..n_cols).map(move |c| m[(z, c)]))
            .collect();
        Self {
            values,
            n_z,
            n_cols,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_z, self.n_cols, &self.values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, z: usize, c: usize) -> f64 {
        self.values[z * self.n_cols + c]
    }

    pub fn block(&self, z: usize) -> &[f64] {
        &self.values[z * self.n_cols..(z + 1) * self.n_cols]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `I_{n_z} ⊗ block`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovOperator {
    block: DMatrix<f64>,
    n_z: usize,
}

impl MarkovOperator {
    pub fn new(block: DMatrix<f64>, n_z: usize) -> Self {
        assert!(n_z >= 1, "need at least one z-block");
        Self { block, n_z }
    }

    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    /// Output length per z-block.
    pub fn n_rows(&self) -> usize {
        self.block.nrows()
    }

    /// Input length per z-block.
    pub fn n_cols(&self) -> usize {
        self.block.ncols()
    }

    pub fn apply(&self, v: &ZMajorVector) -> Result<ZMajorVector> {
        self.check_input(v, self.n_cols())?;
        Ok(ZMajorVector::from_matrix(
            &(v.to_matrix() * self.block.transpose()),
        ))
    }

    pub fn apply_transpose(&self, v: &ZMajorVector) -> Result<ZMajorVector> {
        self.check_input(v, self.n_rows())?;
        Ok(ZMajorVector::from_matrix(&(v.to_matrix() * &self.block)))
    }

    fn check_input(&self, v: &ZMajorVector, cols: usize) -> Result<()> {
        if v.n_z() != self.n_z || v.n_cols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "operator expects {}x{} z-major input, got {}x{}",
                self.n_z,
                cols,
                v.n_z(),
                v.n_cols()
            )));
        }
        Ok(())
    }

    /// Spectral norm; equal to that of the block.
    pub fn operator_norm(&self) -> f64 {
        self.block.singular_values().max()
    }

    /// Number of singular values above `rcond * sigma_max`.
    pub fn rank(&self, rcond: f64) -> usize {
        let sv = self.block.singular_values();
        let cutoff = rcond * sv.max();
        sv.iter().filter(|&&s| s > cutoff).count()
    }

    /// `I ⊗ block^+` via the SVD, dropping singular values at or below
    /// `rcond * sigma_max`. Fails when the retained rank is below `min_rank`.
    pub fn pseudo_inverse(&self, rcond: f64, min_rank: usize) -> Result<MarkovOperator> {
        let svd = self.block.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let cutoff = rcond * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        if rank < min_rank || rank == 0 {
            return Err(Error::RankDeficient {
                rank,
                required: min_rank.max(1),
            });
        }
        let pinv = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::InvalidConfig(format!("pseudo-inverse failed: {e}")))?;
        Ok(MarkovOperator::new(pinv, self.n_z))
    }

    /// Dense `n_z * rows × n_z * cols` form, for verification only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (r, c) = self.block.shape();
        let mut dense = DMatrix::zeros(self.n_z * r, self.n_z * c);
        for z in 0..self.n_z {
            dense
                .view_mut((z * r, z * c), (r, c))
                .copy_from(&self.block);
        }
        dense
    }
}

/// `B = I ⊗ Q_{y|x}^T`: block `(x, y) = P(y|x)`, so applying it to a
/// `(z, y)`-indexed vector gives `sum_y P(y|x) v(z, y)` per `(z, x)`.
pub fn make_b_operator(j: &JointXY, n_z: usize) -> MarkovOperator {
    MarkovOperator::new(j.y_given_x().matrix().transpose(), n_z)
}

/// `A = I ⊗ Q_{x|y}^T`: block `(y, x) = P(x|y)`, so applying it to
/// `vec(P(Z|X))` gives `vec(P(Z|Y))`. A valid [`JointXY`] already has a
/// strictly positive `p_Y`, which is the only failure mode of Bayes inversion.
pub fn make_a_operator(j: &JointXY, n_z: usize) -> MarkovOperator {
    MarkovOperator::new(j.x_given_y().matrix().transpose(), n_z)
}

/// Applies `op^+` block-wise.
pub fn pinv_apply(
    op: &MarkovOperator,
    v: &ZMajorVector,
    rcond: f64,
    min_rank: usize,
) -> Result<ZMajorVector> {
    op.pseudo_inverse(rcond, min_rank)?.apply(v)
}

/// Softmax over `z` separately for every column index `c`.
pub fn softmax_over_z(v: &ZMajorVector) -> ZMajorVector {
    let (n_z, n_cols) = (v.n_z(), v.n_cols());
    let mut out = vec![0.0; n_z * n_cols];
    for c in 0..n_cols {
        let max = (0..n_z)
            .map(|z| v.get(z, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in 0..n_z {
            let e = (v.get(z, c) - max).exp();
            out[z * n_cols + c] = e;
            total += e;
        }
        for z in 0..n_z {
            out[z * n_cols + c] /= total;
        }
    }
    ZMajorVector {
        values: out,
        n_z,
        n_cols,
    }
}

/// `log sum exp(values)` with max-shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
