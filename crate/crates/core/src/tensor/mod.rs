//! Dense reverse-mode differentiation.
//!
//! [`Tensor`] is a plain row-major matrix value. A [`Tape`] records every
//! operation of one forward pass; [`Tape::backward`] consumes it and returns
//! [`Gradients`]. Learnable parameters live in a [`ParamStore`] and enter a
//! tape through [`Tape::param`].
//!
//! All tensors are two-dimensional: a vector of length `n` is a `1 x n` row
//! (one node state) or an `n x 1` column (one value per edge).

mod gradcheck;
mod gru;
mod params;
mod tape;

pub use gradcheck::{grad_check, grad_check_store, GradCheckReport, DEFAULT_EPS};
pub use gru::{gru_cell, GruParams};
pub use params::{init, ParamId, ParamStore};
pub use tape::{segment_softmax_values, Gradients, Tape, Var};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar type used throughout the crate.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type used throughout the crate.
#[cfg(feature = "f32")]
pub type Real = f32;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<Real>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Self {
            shape: [rows, cols],
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn full(rows: usize, cols: usize, value: Real) -> Self {
        Self {
            shape: [rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: Real) -> Self {
        Self {
            shape: [1, 1],
            data: vec![value],
        }
    }

    /// A `1 x n` row vector.
    pub fn row(values: Vec<Real>) -> Self {
        Self {
            shape: [1, values.len()],
            data: values,
        }
    }

    /// An `n x 1` column vector.
    pub fn column(values: Vec<Real>) -> Self {
        Self {
            shape: [values.len(), 1],
            data: values,
        }
    }

    /// Stacks equally long rows into a matrix. `cols` is used when `rows` is empty.
    pub fn from_rows(rows: &[Vec<Real>], cols: usize) -> Result<Self> {
        let cols = rows.first().map_or(cols, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape {
                    op: "from_rows",
                    detail: format!("row {i} has length {}, expected {cols}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            shape: [rows.len(), cols],
            data,
        })
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Real) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[Real] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<Real>> {
        (0..self.rows()).map(|r| self.row_slice(r).to_vec()).collect()
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &r in idx {
            data.extend_from_slice(self.row_slice(r));
        }
        Self {
            shape: [idx.len(), c],
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<Real> {
        (self.shape == other.shape).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, Real::max)
        })
    }

    /// Euclidean distance between two equally shaped tensors.
    pub fn distance(&self, other: &Tensor) -> Option<Real> {
        (self.shape == other.shape).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<Real>()
                .sqrt()
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
