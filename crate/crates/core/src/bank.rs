//! Shared-memory bank model: block-major vector rearrangement and an exact
//! conflict simulator for the access pattern of the balanced kernel.
//!
//! The model: memory is divided into `num_banks` equally sized modules; a
//! simultaneous load of n addresses that lands on n distinct banks is
//! serviced in one step, while addresses sharing a bank serialize. Rearranging
//! the multiplicand vector so block `j` lives in bank `j mod num_banks` makes
//! every lockstep access group of the balanced kernel (one lane per block)
//! conflict-free whenever `blocks_per_row <= num_banks`.

use crate::balanced::BalancedSparseMatrix;
use thiserror::Error;

/// Bank count of contemporary shared-memory hardware.
pub const DEFAULT_NUM_BANKS: usize = 32;

#[derive(Error, Debug, PartialEq)]
pub enum BankError {
    #[error("{blocks} blocks cannot spread over {num_banks} banks conflict-free")]
    TooManyBlocksForBanks { blocks: usize, num_banks: usize },

    #[error("vector length {len} not divisible by block size {block_size}")]
    NonDivisibleLength { len: usize, block_size: usize },
}

/// Where each element of the original vector lives after rearrangement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankLayout {
    num_banks: usize,
    /// Original element index -> bank id, each in `[0, num_banks)`.
    banks: Vec<usize>,
}

impl BankLayout {
    pub fn num_banks(&self) -> usize {
        self.num_banks
    }

    /// Bank holding the element that sat at `index` in the original vector.
    #[inline]
    pub fn bank_of(&self, index: usize) -> usize {
        self.banks[index]
    }
}

/// One set of element indices loaded simultaneously, one per lockstep lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessGroup {
    pub indices: Vec<usize>,
}

/// Rearranges `x` block-major: element `i` of block `j` moves to storage slot
/// `i * num_banks + j`, so storage position mod `num_banks` is the bank and
/// block `j` occupies bank `j` entirely.
///
/// The returned storage is padded with zeros to `block_size * num_banks`
/// entries, mirroring a fixed-width memory module array.
pub fn rearrange_block_major(
    x: &[f32],
    block_size: usize,
    num_banks: usize,
) -> Result<(Vec<f32>, BankLayout), BankError> {
    if block_size == 0 || x.len() % block_size != 0 {
        return Err(BankError::NonDivisibleLength {
            len: x.len(),
            block_size,
        });
    }
    let blocks = x.len() / block_size;
    if blocks > num_banks {
        return Err(BankError::TooManyBlocksForBanks { blocks, num_banks });
    }
    let mut storage = vec![0.0f32; block_size * num_banks];
    let mut banks = vec![0usize; x.len()];
    for (e, v) in x.iter().enumerate() {
        let block = e / block_size;
        let slot = e % block_size;
        storage[slot * num_banks + block] = *v;
        banks[e] = block % num_banks;
    }
    Ok((storage, BankLayout { num_banks, banks }))
}

/// Maximum number of group elements that share one bank; 1 means the whole
/// group is serviced simultaneously.
pub fn bank_conflict_factor(group: &AccessGroup, layout: &BankLayout) -> usize {
    assert!(!group.indices.is_empty(), "conflict factor of an empty group");
    let mut counts = vec![0usize; layout.num_banks];
    for &idx in &group.indices {
        counts[layout.bank_of(idx)] += 1;
    }
    counts.into_iter().max().unwrap()
}

/// Lockstep access trace of the balanced kernel: one lane per block, one group
/// per (row, step) with step `t` touching the `t`-th stored entry of every
/// block. Group count is `rows * k`; the traced indices cover the stored
/// nonzero positions exactly once.
pub fn kernel_access_trace(m: &BalancedSparseMatrix) -> Vec<AccessGroup> {
    let blocks = m.blocks_per_row();
    let bs = m.block_size();
    let mut trace = Vec::with_capacity(m.rows() * m.k());
    for row in 0..m.rows() {
        for t in 0..m.k() {
            let indices = (0..blocks)
                .map(|b| b * bs + m.block_offsets(row, b)[t] as usize)
                .collect();
            trace.push(AccessGroup { indices });
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_blocks_spread_over_four_banks() {
        let x: Vec<f32> = (0..16).map(|i| i as f32).collect();
        let (storage, layout) = rearrange_block_major(&x, 4, 32).unwrap();
        for e in 0..16 {
            assert_eq!(layout.bank_of(e), e / 4);
        }
        // element 9 is slot 1 of block 2
        assert_eq!(storage[1 * 32 + 2], 9.0);
        let group = AccessGroup { indices: vec![0, 4, 9, 13] };
        assert_eq!(bank_conflict_factor(&group, &layout), 1);
    }

    #[test]
    fn single_block_serializes_any_group() {
        let x = vec![1.0f32; 8];
        let (_, layout) = rearrange_block_major(&x, 8, 32).unwrap();
        let group = AccessGroup { indices: vec![0, 3, 7] };
        assert_eq!(bank_conflict_factor(&group, &layout), 3);
    }

    #[test]
    fn too_many_blocks_rejected() {
        let x = vec![0.0f32; 33];
        assert_eq!(
            rearrange_block_major(&x, 1, 32).unwrap_err(),
            BankError::TooManyBlocksForBanks { blocks: 33, num_banks: 32 }
        );
        assert_eq!(
            rearrange_block_major(&x, 2, 32).unwrap_err(),
            BankError::NonDivisibleLength { len: 33, block_size: 2 }
        );
    }

    #[test]
    fn trace_shape_matches_structure() {
        use crate::balanced::random_balanced;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let m = random_balanced(3, 16, 4, 2, &mut rng);
        let trace = kernel_access_trace(&m);
        assert_eq!(trace.len(), 3 * 2);
        assert!(trace.iter().all(|g| g.indices.len() == 4));
        let empty = crate::balanced::BalancedSparseMatrix::from_parts(2, 8, 4, 0, vec![], vec![]);
        assert!(kernel_access_trace(&empty).is_empty());
    }
}
