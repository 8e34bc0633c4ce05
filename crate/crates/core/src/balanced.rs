//! Balanced sparse matrix: every row is split into equal-width blocks and
//! every block stores exactly `k` nonzeros.
//!
//! # Storage
//!
//! For an `rows x cols` matrix with `block_size` columns per block:
//! - `col_indices`: `Vec<u16>` of local offsets in `[0, block_size)`, laid out
//!   row-major, then block-major, ascending within each block. Length is
//!   `rows * blocks_per_row * k`.
//! - `values`: `Vec<f32>` aligned 1:1 with `col_indices`.
//!
//! The flat layout makes the per-block entry count structural: as long as the
//! buffer lengths are right, every `(row, block)` slice holds exactly `k`
//! entries. `validate` therefore reports count damage as a storage-size
//! violation rather than pointing at a single block.

use crate::dense::DenseMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum EncodeError {
    #[error("{cols} columns not divisible by block size {block_size}")]
    NonDivisibleColumns { cols: usize, block_size: usize },

    #[error(
        "unbalanced pattern at row {row}, block {block}: {count} nonzeros where {expected} expected"
    )]
    UnbalancedPattern {
        row: usize,
        block: usize,
        count: usize,
        expected: usize,
    },
}

/// One invariant breach found by [`BalancedSparseMatrix::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `cols` is not a multiple of `block_size`.
    NonDivisibleColumns { cols: usize, block_size: usize },
    /// `k` exceeds the block width.
    KExceedsBlockSize { k: usize, block_size: usize },
    /// `col_indices` length disagrees with `rows * blocks_per_row * k`, so at
    /// least one block cannot hold exactly `k` entries.
    StorageSizeMismatch { expected: usize, actual: usize },
    /// `values` and `col_indices` lengths differ.
    ValueAlignmentMismatch { indices: usize, values: usize },
    /// A local offset is outside `[0, block_size)`.
    OffsetOutOfRange {
        row: usize,
        block: usize,
        slot: usize,
        offset: u16,
    },
    /// Two entries of one block share an offset.
    DuplicateOffset { row: usize, block: usize, offset: u16 },
    /// Offsets within a block are not strictly increasing.
    NotAscending { row: usize, block: usize, slot: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonDivisibleColumns { cols, block_size } => {
                write!(f, "{cols} columns not divisible by block size {block_size}")
            }
            Violation::KExceedsBlockSize { k, block_size } => {
                write!(f, "k={k} exceeds block size {block_size}")
            }
            Violation::StorageSizeMismatch { expected, actual } => {
                write!(f, "index storage holds {actual} entries, expected {expected}")
            }
            Violation::ValueAlignmentMismatch { indices, values } => {
                write!(f, "{indices} indices but {values} values")
            }
            Violation::OffsetOutOfRange { row, block, slot, offset } => {
                write!(f, "offset {offset} out of range at row {row}, block {block}, slot {slot}")
            }
            Violation::DuplicateOffset { row, block, offset } => {
                write!(f, "duplicate offset {offset} at row {row}, block {block}")
            }
            Violation::NotAscending { row, block, slot } => {
                write!(f, "offsets not ascending at row {row}, block {block}, slot {slot}")
            }
        }
    }
}

/// Block-partitioned sparse matrix with a fixed nonzero count per block.
///
/// `k` is a property of the whole matrix, not of individual rows; the achieved
/// sparsity is `1 - k / block_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSparseMatrix {
    rows: usize,
    cols: usize,
    block_size: usize,
    k: usize,
    col_indices: Vec<u16>,
    values: Vec<f32>,
}

impl BalancedSparseMatrix {
    /// Assembles a matrix from raw parts without checking invariants.
    ///
    /// Callers that cannot guarantee well-formed parts must run
    /// [`validate`](Self::validate) on the result.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        block_size: usize,
        k: usize,
        col_indices: Vec<u16>,
        values: Vec<f32>,
    ) -> Self {
        Self {
            rows,
            cols,
            block_size,
            k,
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

    /// Columns per block; the width of the balance unit.
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Nonzeros kept in every block.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks_per_row(&self) -> usize {
        self.cols / self.block_size
    }

    /// `1 - k / block_size`.
    pub fn achieved_sparsity(&self) -> f64 {
        1.0 - self.k as f64 / self.block_size as f64
    }

    /// Total stored entries: `rows * blocks_per_row * k`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Local offsets, row-major then block-major, ascending within a block.
    pub fn col_indices(&self) -> &[u16] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Offsets of one `(row, block)` slice, length `k`.
    #[inline]
    pub fn block_offsets(&self, row: usize, block: usize) -> &[u16] {
        let base = (row * self.blocks_per_row() + block) * self.k;
        &self.col_indices[base..base + self.k]
    }

    /// Values of one `(row, block)` slice, aligned with `block_offsets`.
    #[inline]
    pub fn block_values(&self, row: usize, block: usize) -> &[f32] {
        let base = (row * self.blocks_per_row() + block) * self.k;
        &self.values[base..base + self.k]
    }

    /// Checks every invariant, returning an empty list iff all hold.
    ///
    /// Violations carry the invariant and its location; scanning continues
    /// past the first breach so repair tooling sees the full damage.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.block_size == 0 || self.cols % self.block_size != 0 {
            out.push(Violation::NonDivisibleColumns {
                cols: self.cols,
                block_size: self.block_size,
            });
            return out;
        }
        if self.k > self.block_size {
            out.push(Violation::KExceedsBlockSize {
                k: self.k,
                block_size: self.block_size,
            });
        }
        let expected = self.rows * self.blocks_per_row() * self.k;
        if self.col_indices.len() != expected {
            out.push(Violation::StorageSizeMismatch {
                expected,
                actual: self.col_indices.len(),
            });
        }
        if self.values.len() != self.col_indices.len() {
            out.push(Violation::ValueAlignmentMismatch {
                indices: self.col_indices.len(),
                values: self.values.len(),
            });
        }
        if self.col_indices.len() != expected || self.values.len() != expected {
            return out;
        }
        for row in 0..self.rows {
            for block in 0..self.blocks_per_row() {
                let offs = self.block_offsets(row, block);
                for (slot, &off) in offs.iter().enumerate() {
                    if off as usize >= self.block_size {
                        out.push(Violation::OffsetOutOfRange {
                            row,
                            block,
                            slot,
                            offset: off,
                        });
                    }
                    if slot > 0 {
                        if off == offs[slot - 1] {
                            out.push(Violation::DuplicateOffset {
                                row,
                                block,
                                offset: off,
                            });
                        } else if off < offs[slot - 1] {
                            out.push(Violation::NotAscending { row, block, slot });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Encodes a dense matrix whose nonzero pattern is already balanced.
///
/// `k` is inferred from the first block of the first row; every other block
/// must hold the same count of nonzeros or the call fails. Values are carried
/// over verbatim, never reordered, scaled, or dropped.
pub fn encode_balanced(
    dense: &DenseMatrix,
    block_size: usize,
) -> Result<BalancedSparseMatrix, EncodeError> {
    if block_size == 0 || dense.cols() % block_size != 0 {
        return Err(EncodeError::NonDivisibleColumns {
            cols: dense.cols(),
            block_size,
        });
    }
    let blocks = dense.cols() / block_size;
    let mut k = usize::MAX;
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for row in 0..dense.rows() {
        let r = dense.row(row);
        for block in 0..blocks {
            let seg = &r[block * block_size..(block + 1) * block_size];
            let before = col_indices.len();
            for (off, &v) in seg.iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(off as u16);
                    values.push(v);
                }
            }
            let count = col_indices.len() - before;
            if k == usize::MAX {
                k = count;
            } else if count != k {
                return Err(EncodeError::UnbalancedPattern {
                    row,
                    block,
                    count,
                    expected: k,
                });
            }
        }
    }
    Ok(BalancedSparseMatrix::from_parts(
        dense.rows(),
        dense.cols(),
        block_size,
        k,
        col_indices,
        values,
    ))
}

/// Expands a balanced matrix back to dense form.
///
/// Stored values land at `(row, block * block_size + offset)`; every other
/// entry is exactly zero.
pub fn decode_to_dense(bsm: &BalancedSparseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(bsm.rows(), bsm.cols()).expect("valid dims");
    let blocks = bsm.blocks_per_row();
    for row in 0..bsm.rows() {
        for block in 0..blocks {
            let offs = bsm.block_offsets(row, block);
            let vals = bsm.block_values(row, block);
            for (off, v) in offs.iter().zip(vals) {
                out.set(row, block * bsm.block_size() + *off as usize, *v);
            }
        }
    }
    out
}

/// Seeded random balanced matrix: uniform offset choice per block, standard
/// normal values. Shared by tests and the benchmark harness.
pub fn random_balanced<R: Rng>(
    rows: usize,
    cols: usize,
    block_size: usize,
    k: usize,
    rng: &mut R,
) -> BalancedSparseMatrix {
    assert!(block_size >= 1 && cols % block_size == 0);
    assert!(k <= block_size && block_size <= u16::MAX as usize + 1);
    let blocks = cols / block_size;
    let mut col_indices = Vec::with_capacity(rows * blocks * k);
    let mut values = Vec::with_capacity(rows * blocks * k);
    for _ in 0..rows * blocks {
        let mut offs: Vec<usize> = sample(rng, block_size, k).into_vec();
        offs.sort_unstable();
        for off in offs {
            col_indices.push(off as u16);
            let mut v: f32 = rng.sample(StandardNormal);
            // stored zeros would decode as holes; nudge the measure-zero case
            if v == 0.0 {
                v = 1.0e-6;
            }
            values.push(v);
        }
    }
    BalancedSparseMatrix::from_parts(rows, cols, block_size, k, col_indices, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_row() -> DenseMatrix {
        // 1x8 row with one nonzero in each 4-wide block
        DenseMatrix::new(1, 8, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0]).unwrap()
    }

    #[test]
    fn encode_infers_k_and_offsets() {
        let m = encode_balanced(&fig_row(), 4).unwrap();
        assert_eq!(m.k(), 1);
        assert_eq!(m.col_indices(), &[1, 2]);
        assert_eq!(m.values(), &[2.0, -1.0]);
        assert_eq!(decode_to_dense(&m), fig_row());
    }

    #[test]
    fn encode_rejects_unbalanced() {
        let d = DenseMatrix::new(1, 8, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0]).unwrap();
        let err = encode_balanced(&d, 4).unwrap_err();
        assert_eq!(
            err,
            EncodeError::UnbalancedPattern {
                row: 0,
                block: 1,
                count: 1,
                expected: 2
            }
        );
    }

    #[test]
    fn encode_rejects_non_divisible() {
        let d = DenseMatrix::zeros(1, 6).unwrap();
        assert!(matches!(
            encode_balanced(&d, 4),
            Err(EncodeError::NonDivisibleColumns { cols: 6, block_size: 4 })
        ));
    }

    #[test]
    fn fully_dense_round_trip() {
        let d = DenseMatrix::new(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let m = encode_balanced(&d, 4).unwrap();
        assert_eq!(m.k(), 4);
        assert_eq!(decode_to_dense(&m), d);
    }

    #[test]
    fn k_zero_decodes_to_zeros() {
        let m = BalancedSparseMatrix::from_parts(3, 8, 4, 0, vec![], vec![]);
        assert!(m.validate().is_empty());
        let d = decode_to_dense(&m);
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn validate_reports_duplicate_and_order() {
        let m = BalancedSparseMatrix::from_parts(1, 4, 4, 2, vec![2, 2], vec![1.0, 2.0]);
        assert_eq!(
            m.validate(),
            vec![Violation::DuplicateOffset { row: 0, block: 0, offset: 2 }]
        );
        let m = BalancedSparseMatrix::from_parts(1, 4, 4, 2, vec![3, 1], vec![1.0, 2.0]);
        assert_eq!(
            m.validate(),
            vec![Violation::NotAscending { row: 0, block: 0, slot: 1 }]
        );
    }

    #[test]
    fn validate_reports_storage_damage() {
        // drop one entry: no block can hold exactly k anymore
        let d = fig_row();
        let good = encode_balanced(&d, 4).unwrap();
        let m = BalancedSparseMatrix::from_parts(
            1,
            8,
            4,
            1,
            good.col_indices()[..1].to_vec(),
            good.values()[..1].to_vec(),
        );
        assert_eq!(
            m.validate(),
            vec![Violation::StorageSizeMismatch { expected: 2, actual: 1 }]
        );
    }
}
