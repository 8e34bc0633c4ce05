//! Row-major dense matrix, the pruning input and kernel baseline.

use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum DenseError {
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyDimensions { rows: usize, cols: usize },

    #[error("value buffer holds {actual} entries, {rows}x{cols} needs {expected}")]
    LengthMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
}

/// Dense weight matrix stored row-major as `f32`.
///
/// Immutable after construction; all library operations treat it as a value.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl DenseMatrix {
    /// Builds a matrix from a row-major buffer.
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self, DenseError> {
        if rows == 0 || cols == 0 {
            return Err(DenseError::EmptyDimensions { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(DenseError::LengthMismatch {
                rows,
                cols,
                expected: rows * cols,
                actual: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, DenseError> {
        Self::new(rows, cols, vec![0.0; rows.checked_mul(cols).unwrap_or(0)])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing slice, length `rows * cols`.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col] = value;
    }

    /// One row as a slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[f32] {
        debug_assert!(row < self.rows);
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Count of entries that are not exactly zero.
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Copy with zero columns appended until `cols` is a multiple of `multiple`.
    ///
    /// The core format rejects non-divisible column counts; padding is an
    /// explicit caller choice, never implicit.
    pub fn pad_cols(&self, multiple: usize) -> DenseMatrix {
        assert!(multiple >= 1, "padding multiple must be at least 1");
        let rem = self.cols % multiple;
        if rem == 0 {
            return self.clone();
        }
        let new_cols = self.cols + (multiple - rem);
        let mut values = vec![0.0f32; self.rows * new_cols];
        for r in 0..self.rows {
            values[r * new_cols..r * new_cols + self.cols].copy_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: self.rows,
            cols: new_cols,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(matches!(
            DenseMatrix::new(0, 3, vec![]),
            Err(DenseError::EmptyDimensions { .. })
        ));
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0; 3]),
            Err(DenseError::LengthMismatch { expected: 4, actual: 3, .. })
        ));
    }

    #[test]
    fn pad_cols_appends_zeros() {
        let m = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = m.pad_cols(4);
        assert_eq!(p.cols(), 4);
        assert_eq!(p.row(0), &[1.0, 2.0, 3.0, 0.0]);
        assert_eq!(p.row(1), &[4.0, 5.0, 6.0, 0.0]);
        // already divisible: unchanged
        assert_eq!(m.pad_cols(3), m);
    }
}
