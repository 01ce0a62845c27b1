//! Dense row-major matrices: the weight matrix of one linear layer and the
//! score matrices derived from it.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Dense<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Dense<U> {
        Dense {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Per-weight importance scores, accumulated in double precision.
pub type ScoreMatrix = Dense<f64>;

/// Dense `F_out x F_in` weight matrix of one linear layer; rows are output
/// channels, columns are input channels. Non-empty with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Dense<f32>);

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_dense(Dense::from_vec(rows, cols, data)?)
    }

    pub fn from_dense(dense: Dense<f32>) -> Result<Self> {
        if dense.rows == 0 || dense.cols == 0 {
            return Err(Error::Shape(format!(
                "weight matrix must be non-empty, got {}x{}",
                dense.rows, dense.cols
            )));
        }
        if let Some(pos) = dense.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "non-finite weight at ({}, {})",
                pos / dense.cols,
                pos % dense.cols
            )));
        }
        Ok(Self(dense))
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn as_dense(&self) -> &Dense<f32> {
        &self.0
    }

    pub fn into_dense(self) -> Dense<f32> {
        self.0
    }

    /// Σ_k |W_ik| for every row, accumulated in f64.
    pub fn abs_row_sums(&self) -> Vec<f64> {
        (0..self.0.rows)
            .map(|i| self.0.row(i).iter().map(|&v| f64::from(v).abs()).sum())
            .collect()
    }

    /// Σ_k |W_kj| for every column, accumulated in f64 in row order.
    pub fn abs_col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.0.cols];
        for i in 0..self.0.rows {
            for (s, &v) in sums.iter_mut().zip(self.0.row(i)) {
                *s += f64::from(v).abs();
            }
        }
        sums
    }

    /// Multiplies every weight by `factor` in f32.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::from_dense(self.0.map(|&v| v * factor))
    }
}

impl Deref for WeightMatrix {
    type Target = Dense<f32>;

    fn deref(&self) -> &Dense<f32> {
        &self.0
    }
}
