//! Minimal from-scratch neural toolkit shared by the DQN agent and the
//! LSTM forecasting baseline: feed-forward networks, an LSTM cell,
//! SGD/Adam optimizers, and finite-difference gradient checking.
//!
//! Everything is plain `f64` on `Vec` storage; sizes are desk-scale, so
//! clarity beats throughput throughout.

mod gradcheck;
mod lstm;
mod mlp;
mod optim;

pub use gradcheck::{finite_difference_gradient, max_relative_error};
pub use lstm::{LstmCell, LstmGrads, LstmTrace};
pub use mlp::{Mlp, MlpCache, MlpGrads};
pub use optim::{OptimKind, Optimizer};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value encountered in {0}")]
    Numeric(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform Xavier/Glorot init over ±sqrt(6/(fan_in+fan_out)).
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            y[r] = acc;
        }
        y
    }

    /// y = Aᵀ x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * xr;
            }
        }
        y
    }

    /// A += col ⊗ row (rank-one update used by the backward passes).
    pub fn add_outer(&mut self, col: &[f64], row: &[f64]) {
        debug_assert_eq!(col.len(), self.rows);
        debug_assert_eq!(row.len(), self.cols);
        for r in 0..self.rows {
            let dst = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let cr = col[r];
            for (d, rv) in dst.iter_mut().zip(row) {
                *d += cr * rv;
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_hand_computation() {
        let a = Matrix {
            rows: 2,
            cols: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(a.matvec_t(&[1.0, -1.0]), vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn add_outer_accumulates() {
        let mut a = Matrix::zeros(2, 2);
        a.add_outer(&[1.0, 2.0], &[3.0, 4.0]);
        a.add_outer(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(a.data, vec![6.0, 8.0, 12.0, 16.0]);
    }
}
