//! On-disk container for balanced matrices.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic (4 bytes)      "BSM1" balanced | "BSD1" dense interchange
//! u32 rows | u32 cols | u32 block_size | u32 k
//! col_indices          u16 local offsets, row-major, block-major, ascending
//! values               f32, aligned 1:1 with col_indices
//! ```
//!
//! A dense matrix travels in the same container with `block_size = cols` and
//! `k = cols`: every offset is stored explicitly and zeros ride along as
//! values. `load` accepts both magics and returns the balanced form either
//! way; `decode_to_dense` recovers the dense matrix.

use crate::balanced::{BalancedSparseMatrix, Violation};
use crate::dense::DenseMatrix;
use std::path::Path;
use thiserror::Error;

const MAGIC_BALANCED: &[u8; 4] = b"BSM1";
const MAGIC_DENSE: &[u8; 4] = b"BSD1";

/// Offsets are stored as u16, so a block may span at most this many columns.
pub const MAX_BLOCK_SIZE: usize = 1 << 16;

#[derive(Error, Debug)]
pub enum FileError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic {found:?}, expected \"BSM1\" or \"BSD1\"")]
    BadMagic { found: [u8; 4] },

    #[error("truncated {section}: expected {expected} bytes, found {actual}")]
    Truncated {
        section: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix invalid after load: {first} ({total} violation(s) in total)")]
    InvalidMatrix { first: Violation, total: usize },

    #[error("block size {block_size} exceeds the u16 offset range ({MAX_BLOCK_SIZE})")]
    BlockTooWide { block_size: usize },

    #[error("dimension {value} does not fit the u32 header field")]
    DimensionOverflow { value: usize },
}

fn header_u32(value: usize) -> Result<u32, FileError> {
    u32::try_from(value).map_err(|_| FileError::DimensionOverflow { value })
}

fn encode_bytes(
    magic: &[u8; 4],
    rows: usize,
    cols: usize,
    block_size: usize,
    k: usize,
    col_indices: &[u16],
    values: &[f32],
) -> Result<Vec<u8>, FileError> {
    if block_size > MAX_BLOCK_SIZE {
        return Err(FileError::BlockTooWide { block_size });
    }
    let mut buf = Vec::with_capacity(20 + col_indices.len() * 2 + values.len() * 4);
    buf.extend_from_slice(magic);
    for field in [rows, cols, block_size, k] {
        buf.extend_from_slice(&header_u32(field)?.to_le_bytes());
    }
    for off in col_indices {
        buf.extend_from_slice(&off.to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Writes a balanced matrix under the "BSM1" magic.
pub fn save(bsm: &BalancedSparseMatrix, path: &Path) -> Result<(), FileError> {
    let buf = encode_bytes(
        MAGIC_BALANCED,
        bsm.rows(),
        bsm.cols(),
        bsm.block_size(),
        bsm.k(),
        bsm.col_indices(),
        bsm.values(),
    )?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Writes a dense matrix under the "BSD1" magic (`block_size = k = cols`).
pub fn save_dense(dense: &DenseMatrix, path: &Path) -> Result<(), FileError> {
    let cols = dense.cols();
    if cols > MAX_BLOCK_SIZE {
        return Err(FileError::BlockTooWide { block_size: cols });
    }
    let mut col_indices = Vec::with_capacity(dense.rows() * cols);
    for _ in 0..dense.rows() {
        col_indices.extend((0..cols).map(|c| c as u16));
    }
    let buf = encode_bytes(
        MAGIC_DENSE,
        dense.rows(),
        cols,
        cols,
        cols,
        &col_indices,
        dense.values(),
    )?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Which magic a file carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Balanced,
    Dense,
}

/// Reads either container, validating invariants after parse.
pub fn load(path: &Path) -> Result<(BalancedSparseMatrix, ContainerKind), FileError> {
    let buf = std::fs::read(path)?;
    if buf.len() < 4 {
        return Err(FileError::Truncated {
            section: "magic",
            expected: 4,
            actual: buf.len(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&buf[..4]);
    let kind = match &magic {
        m if m == MAGIC_BALANCED => ContainerKind::Balanced,
        m if m == MAGIC_DENSE => ContainerKind::Dense,
        _ => return Err(FileError::BadMagic { found: magic }),
    };
    if buf.len() < 20 {
        return Err(FileError::Truncated {
            section: "header",
            expected: 20,
            actual: buf.len(),
        });
    }
    let mut fields = [0usize; 4];
    for (i, f) in fields.iter_mut().enumerate() {
        let mut b = [0u8; 4];
        b.copy_from_slice(&buf[4 + i * 4..8 + i * 4]);
        *f = u32::from_le_bytes(b) as usize;
    }
    let [rows, cols, block_size, k] = fields;
    let entries = if block_size == 0 {
        0
    } else {
        rows * (cols / block_size) * k
    };
    let idx_end = 20 + entries * 2;
    let val_end = idx_end + entries * 4;
    if buf.len() < idx_end {
        return Err(FileError::Truncated {
            section: "column index section",
            expected: idx_end,
            actual: buf.len(),
        });
    }
    if buf.len() != val_end {
        return Err(FileError::Truncated {
            section: "value section",
            expected: val_end,
            actual: buf.len(),
        });
    }
    let col_indices: Vec<u16> = buf[20..idx_end]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    let values: Vec<f32> = buf[idx_end..val_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let bsm = BalancedSparseMatrix::from_parts(rows, cols, block_size, k, col_indices, values);
    let violations = bsm.validate();
    if let Some(first) = violations.first() {
        return Err(FileError::InvalidMatrix {
            first: first.clone(),
            total: violations.len(),
        });
    }
    Ok((bsm, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balanced::{encode_balanced, random_balanced};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_balanced() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = random_balanced(5, 16, 4, 2, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bsm");
        save(&m, &p).unwrap();
        let (back, kind) = load(&p).unwrap();
        assert_eq!(kind, ContainerKind::Balanced);
        assert_eq!(back, m);
    }

    #[test]
    fn round_trip_dense_container() {
        let d = DenseMatrix::new(2, 3, vec![1.0, 0.0, -2.5, 4.0, 0.0, 0.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bsm");
        save_dense(&d, &p).unwrap();
        let (back, kind) = load(&p).unwrap();
        assert_eq!(kind, ContainerKind::Dense);
        assert_eq!(back.k(), 3);
        assert_eq!(crate::balanced::decode_to_dense(&back), d);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bsm");
        std::fs::write(&p, b"NOPE0000000000000000").unwrap();
        assert!(matches!(load(&p), Err(FileError::BadMagic { found }) if &found == b"NOPE"));
    }

    #[test]
    fn truncated_values_rejected_with_lengths() {
        let d = DenseMatrix::new(1, 4, vec![1.0, 0.0, 2.0, 0.0]).unwrap();
        let m = encode_balanced(&d, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bsm");
        save(&m, &p).unwrap();
        let full = std::fs::read(&p).unwrap();
        std::fs::write(&p, &full[..full.len() - 3]).unwrap();
        match load(&p) {
            Err(FileError::Truncated { section, expected, actual }) => {
                assert_eq!(section, "value section");
                assert_eq!(expected, full.len());
                assert_eq!(actual, full.len() - 3);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_content_rejected() {
        // duplicate offsets inside a block survive parsing but fail validation
        let m = BalancedSparseMatrix::from_parts(1, 4, 4, 2, vec![1, 1], vec![1.0, 2.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bsm");
        save(&m, &p).unwrap();
        assert!(matches!(load(&p), Err(FileError::InvalidMatrix { .. })));
    }
}
