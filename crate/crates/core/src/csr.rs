//! Compressed sparse row matrix, the fine-grained baseline for unstructured
//! sparsity.

use crate::dense::DenseMatrix;
use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum CsrError {
    #[error("row_offsets length {len} does not fit {rows} rows (expected {expected})")]
    OffsetsLength {
        len: usize,
        rows: usize,
        expected: usize,
    },

    #[error("row_offsets not nondecreasing at index {index}")]
    OffsetsNotMonotone { index: usize },

    #[error("row_offsets end {end} does not match {nnz} stored entries")]
    OffsetsEndMismatch { end: usize, nnz: usize },

    #[error("column index {col} out of range for {cols} columns")]
    ColumnOutOfRange { col: usize, cols: usize },

    #[error("column indices not sorted within row {row}")]
    NotSortedInRow { row: usize },

    #[error("{indices} column indices but {values} values")]
    LengthMismatch { indices: usize, values: usize },
}

/// CSR matrix with global column indices, sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f32>,
}

impl CsrMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f32>,
    ) -> Result<Self, CsrError> {
        if row_offsets.len() != rows + 1 {
            return Err(CsrError::OffsetsLength {
                len: row_offsets.len(),
                rows,
                expected: rows + 1,
            });
        }
        if col_indices.len() != values.len() {
            return Err(CsrError::LengthMismatch {
                indices: col_indices.len(),
                values: values.len(),
            });
        }
        for i in 1..row_offsets.len() {
            if row_offsets[i] < row_offsets[i - 1] {
                return Err(CsrError::OffsetsNotMonotone { index: i });
            }
        }
        if *row_offsets.last().unwrap() != col_indices.len() {
            return Err(CsrError::OffsetsEndMismatch {
                end: *row_offsets.last().unwrap(),
                nnz: col_indices.len(),
            });
        }
        for row in 0..rows {
            let s = &col_indices[row_offsets[row]..row_offsets[row + 1]];
            for (i, &c) in s.iter().enumerate() {
                if c >= cols {
                    return Err(CsrError::ColumnOutOfRange { col: c, cols });
                }
                if i > 0 && c <= s[i - 1] {
                    return Err(CsrError::NotSortedInRow { row });
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Compresses a dense matrix, keeping entries that are not exactly zero.
    pub fn from_dense(dense: &DenseMatrix) -> CsrMatrix {
        let mut row_offsets = Vec::with_capacity(dense.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..dense.rows() {
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        CsrMatrix {
            rows: dense.rows(),
            cols: dense.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `(column, value)` pairs of one row.
    #[inline]
    pub fn row_entries(&self, row: usize) -> (&[usize], &[f32]) {
        let span = self.row_offsets[row]..self.row_offsets[row + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_dense_keeps_nonzeros_in_order() {
        let d = DenseMatrix::new(2, 3, vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0]).unwrap();
        let m = CsrMatrix::from_dense(&d);
        assert_eq!(m.row_offsets(), &[0, 2, 2]);
        assert_eq!(m.col_indices(), &[0, 2]);
        assert_eq!(m.values(), &[1.0, 2.0]);
    }

    #[test]
    fn new_validates_structure() {
        assert!(matches!(
            CsrMatrix::new(1, 3, vec![0, 1, 1], vec![0], vec![1.0]),
            Err(CsrError::OffsetsLength { .. })
        ));
        assert!(matches!(
            CsrMatrix::new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 2.0]),
            Err(CsrError::NotSortedInRow { row: 0 })
        ));
        assert!(matches!(
            CsrMatrix::new(1, 3, vec![0, 1], vec![7], vec![1.0]),
            Err(CsrError::ColumnOutOfRange { col: 7, cols: 3 })
        ));
    }
}
