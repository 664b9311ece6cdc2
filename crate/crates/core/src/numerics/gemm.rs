use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A set of independent dot products, one per output row.
///
/// `Dense` covers ordinary GEMMs: row `r = i·cols + p` is
/// `Σ_k left[i, k] · right[k, p]`. `Sparse` stores explicit operand pairs per
/// row (CSR) and is what the zero-eliminating transposed-conv lowering emits.
#[derive(Debug, Clone, PartialEq)]
pub enum GemmOperands {
    Dense { left: Tensor, right: Tensor },
    Sparse { offsets: Vec<usize>, left: Vec<f64>, right: Vec<f64> },
}

impl GemmOperands {
    pub fn dense(left: Tensor, right: Tensor) -> Result<Self> {
        if left.shape().len() != 2 || right.shape().len() != 2 || left.cols() != right.rows() {
            return Err(Error::Shape(format!("gemm {:?} x {:?}", left.shape(), right.shape())));
        }
        Ok(GemmOperands::Dense { left, right })
    }

    pub fn rows(&self) -> usize {
        match self {
            GemmOperands::Dense { left, right } => left.rows() * right.cols(),
            GemmOperands::Sparse { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn row_len(&self, row: usize) -> usize {
        match self {
            GemmOperands::Dense { left, .. } => left.cols(),
            GemmOperands::Sparse { offsets, .. } => offsets[row + 1] - offsets[row],
        }
    }

    /// Operand pair `k` of dot product `row`.
    #[inline]
    pub fn pair(&self, row: usize, k: usize) -> (f64, f64) {
        match self {
            GemmOperands::Dense { left, right } => {
                let cols = right.cols();
                let (i, p) = (row / cols, row % cols);
                (left.at(i, k), right.at(k, p))
            }
            GemmOperands::Sparse { offsets, left, right } => {
                let idx = offsets[row] + k;
                (left[idx], right[idx])
            }
        }
    }

    pub fn dot(&self, row: usize) -> f64 {
        (0..self.row_len(row)).map(|k| {
            let (a, b) = self.pair(row, k);
            a * b
        }).sum()
    }

    pub fn evaluate(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.dot(r)).collect()
    }

    /// Total multiply-accumulates across all rows.
    pub fn macs(&self) -> u64 {
        match self {
            GemmOperands::Dense { left, right } => (left.rows() * left.cols() * right.cols()) as u64,
            GemmOperands::Sparse { offsets, .. } => *offsets.last().unwrap() as u64,
        }
    }
}
