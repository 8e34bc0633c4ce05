//! Matrix-vector and matrix-matrix kernels over the dense, CSR, and balanced
//! representations.
//!
//! Every kernel accumulates in f64 and rounds once to f32 per output entry,
//! always in ascending index order, so results are bit-identical across
//! repeated calls and across worker counts. Rows are distributed over the
//! current rayon pool once the matrix is large enough to pay for it.

use crate::balanced::BalancedSparseMatrix;
use crate::csr::CsrMatrix;
use crate::dense::DenseMatrix;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum KernelError {
    #[error("vector length {actual} does not match {expected} columns")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Rows below this stay on the calling thread; the split point only moves
/// work between threads, never changes results.
const PAR_ROW_THRESHOLD: usize = 256;

fn map_rows<F: Fn(usize) -> f32 + Sync>(rows: usize, f: F) -> Vec<f32> {
    if rows >= PAR_ROW_THRESHOLD {
        (0..rows).into_par_iter().map(f).collect()
    } else {
        (0..rows).map(f).collect()
    }
}

/// Dense matrix-vector product, the oracle all sparse kernels are tested
/// against.
pub fn gemv_dense(m: &DenseMatrix, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if x.len() != m.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: m.cols(),
            actual: x.len(),
        });
    }
    Ok(map_rows(m.rows(), |r| {
        let mut acc = 0.0f64;
        for (v, xv) in m.row(r).iter().zip(x) {
            acc += *v as f64 * *xv as f64;
        }
        acc as f32
    }))
}

/// Balanced sparse matrix-vector product.
///
/// Each row is one unit of work: per-block partial sums accumulate in
/// ascending block order, entries within a block in ascending offset order.
/// Every block contributes exactly `k` multiply-accumulates, so lanes that
/// split a row by block would stay perfectly load-balanced.
pub fn spmv_balanced(m: &BalancedSparseMatrix, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if x.len() != m.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: m.cols(),
            actual: x.len(),
        });
    }
    let blocks = m.blocks_per_row();
    let bs = m.block_size();
    Ok(map_rows(m.rows(), |r| {
        let mut acc = 0.0f64;
        for block in 0..blocks {
            let offs = m.block_offsets(r, block);
            let vals = m.block_values(r, block);
            let base = block * bs;
            let mut partial = 0.0f64;
            for (off, v) in offs.iter().zip(vals) {
                partial += *v as f64 * x[base + *off as usize] as f64;
            }
            acc += partial;
        }
        acc as f32
    }))
}

/// Balanced sparse matrix times a dense `cols x batch` matrix.
///
/// Column `b` of the result is exactly `spmv_balanced(m, column b of x)`; the
/// loop is the implementation, so the two can never drift apart.
pub fn spmm_balanced(
    m: &BalancedSparseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix, KernelError> {
    if x.rows() != m.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: m.cols(),
            actual: x.rows(),
        });
    }
    let batch = x.cols();
    let mut out = DenseMatrix::zeros(m.rows(), batch).expect("valid dims");
    let mut column = vec![0.0f32; m.cols()];
    for b in 0..batch {
        for (r, c) in column.iter_mut().enumerate() {
            *c = x.get(r, b);
        }
        let y = spmv_balanced(m, &column)?;
        for (r, v) in y.iter().enumerate() {
            out.set(r, b, *v);
        }
    }
    Ok(out)
}

/// CSR matrix-vector product, ascending column order within each row.
pub fn spmv_csr(m: &CsrMatrix, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if x.len() != m.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: m.cols(),
            actual: x.len(),
        });
    }
    Ok(map_rows(m.rows(), |r| {
        let (cols, vals) = m.row_entries(r);
        let mut acc = 0.0f64;
        for (c, v) in cols.iter().zip(vals) {
            acc += *v as f64 * x[*c] as f64;
        }
        acc as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balanced::encode_balanced;

    #[test]
    fn gemv_hand_cases() {
        let ident = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(gemv_dense(&ident, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let m = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(gemv_dense(&m, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert!(gemv_dense(&m, &[1.0]).is_err());
    }

    #[test]
    fn spmv_balanced_matches_hand_value() {
        let d = DenseMatrix::new(1, 8, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0]).unwrap();
        let m = encode_balanced(&d, 4).unwrap();
        let x: Vec<f32> = (1..=8).map(|i| i as f32).collect();
        assert_eq!(spmv_balanced(&m, &x).unwrap(), vec![-3.0]);
        assert_eq!(spmv_csr(&CsrMatrix::from_dense(&d), &x).unwrap(), vec![-3.0]);
    }

    #[test]
    fn k_zero_gives_zero_vector() {
        let m = crate::balanced::BalancedSparseMatrix::from_parts(3, 8, 4, 0, vec![], vec![]);
        assert_eq!(spmv_balanced(&m, &[1.0; 8]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn empty_csr_rows_stay_zero() {
        let d = DenseMatrix::new(3, 2, vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]).unwrap();
        let y = spmv_csr(&CsrMatrix::from_dense(&d), &[1.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.0, 3.0, 0.0]);
    }
}
