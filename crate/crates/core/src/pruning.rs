//! Mask generators: balance-aware iterative pruning plus the three coarse
//! comparison patterns (random, block, vector).
//!
//! All pruners are deterministic functions of the matrix; no randomness enters
//! a pruning decision. Magnitude ties break toward the lower column index
//! (lower flat index for whole-matrix scopes, lower tile or vector index for
//! the coarse patterns), which pins down every kept set exactly.

use crate::balanced::BalancedSparseMatrix;
use crate::dense::DenseMatrix;
use thiserror::Error;

#[derive(Error, Debug, PartialEq)]
pub enum PruneError {
    #[error("{cols} columns cannot split into {block_num} equal blocks")]
    NonDivisibleColumns { cols: usize, block_num: usize },

    #[error("{rows}x{cols} matrix cannot tile into {bh}x{bw} blocks")]
    NonDivisibleDims {
        rows: usize,
        cols: usize,
        bh: usize,
        bw: usize,
    },

    #[error("iteration {iteration} outside schedule of {num_iterations} iterations")]
    IterationOutOfRange {
        iteration: usize,
        num_iterations: usize,
    },

    #[error("schedule needs target in [0,1) and at least 1 iteration, got {target_sparsity} over {num_iterations}")]
    InvalidSchedule {
        target_sparsity: f64,
        num_iterations: usize,
    },

    #[error("retrain callback returned {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    CallbackDimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("retrain callback revived masked entry at ({row}, {col})")]
    CallbackRevivedMaskedEntry { row: usize, col: usize },
}

/// How the target sparsity rises across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `target * (1 - (1 - t/n)^3)`: large early steps, vanishing late ones.
    Cubic,
    /// `target * t/n`: constant increments.
    Linear,
}

/// Gradual sparsity trajectory from 0 at iteration 0 to the target at the
/// final iteration, with nonincreasing increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSchedule {
    pub target_sparsity: f64,
    pub num_iterations: usize,
    pub kind: ScheduleKind,
}

impl PruneSchedule {
    pub fn new(
        target_sparsity: f64,
        num_iterations: usize,
        kind: ScheduleKind,
    ) -> Result<Self, PruneError> {
        if !(0.0..1.0).contains(&target_sparsity) || num_iterations == 0 {
            return Err(PruneError::InvalidSchedule {
                target_sparsity,
                num_iterations,
            });
        }
        Ok(Self {
            target_sparsity,
            num_iterations,
            kind,
        })
    }

    pub fn cubic(target_sparsity: f64, num_iterations: usize) -> Result<Self, PruneError> {
        Self::new(target_sparsity, num_iterations, ScheduleKind::Cubic)
    }

    pub fn linear(target_sparsity: f64, num_iterations: usize) -> Result<Self, PruneError> {
        Self::new(target_sparsity, num_iterations, ScheduleKind::Linear)
    }
}

/// Trajectory value at one iteration; 0 at iteration 0, the target at the end.
pub fn schedule_value(schedule: &PruneSchedule, iteration: usize) -> Result<f64, PruneError> {
    if iteration > schedule.num_iterations {
        return Err(PruneError::IterationOutOfRange {
            iteration,
            num_iterations: schedule.num_iterations,
        });
    }
    let t = iteration as f64 / schedule.num_iterations as f64;
    Ok(match schedule.kind {
        ScheduleKind::Cubic => schedule.target_sparsity * (1.0 - (1.0 - t).powi(3)),
        ScheduleKind::Linear => schedule.target_sparsity * t,
    })
}

/// Keep/drop decision per entry, same shape as the matrix it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl PruneMask {
    fn all_keep(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            keep: vec![true; rows * cols],
        }
    }

    fn none_keep(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            keep: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn keep(&self, row: usize, col: usize) -> bool {
        self.keep[row * self.cols + col]
    }

    /// Row-major keep flags.
    pub fn keep_slice(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    /// Fraction of entries dropped.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.kept_count() as f64 / (self.rows * self.cols) as f64
    }

    /// Copy of `m` with dropped entries forced to exactly zero.
    pub fn apply(&self, m: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (m.rows(), m.cols()));
        let values = m
            .values()
            .iter()
            .zip(&self.keep)
            .map(|(v, k)| if *k { *v } else { 0.0 })
            .collect();
        DenseMatrix::new(self.rows, self.cols, values).expect("shape preserved")
    }
}

/// Nonzeros each block keeps at `sparsity`: `round(block_size * (1-sparsity))`.
pub fn keep_per_block(block_size: usize, sparsity: f64) -> usize {
    (block_size as f64 * (1.0 - sparsity)).round() as usize
}

/// One balanced mask plus the quantities the caller reports.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedStep {
    pub mask: PruneMask,
    /// Entries kept per block.
    pub k: usize,
    /// `1 - k / block_size`, which can differ from the requested fraction.
    pub achieved_sparsity: f64,
}

/// Top-k selection within one block segment, restricted to candidate offsets.
///
/// Ranks by descending magnitude, then ascending offset. Returns kept offsets.
fn select_block_topk(seg: &[f32], candidates: &[usize], k: usize) -> Vec<usize> {
    debug_assert!(k <= candidates.len());
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| {
        seg[b]
            .abs()
            .total_cmp(&seg[a].abs())
            .then_with(|| a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Splits every row into `block_num` equal blocks and keeps the `k` largest
/// magnitudes in each, ties toward the lower column index.
///
/// Panics if `sparsity` is outside `[0, 1)`; weights are assumed finite.
pub fn balanced_prune_step(
    m: &DenseMatrix,
    block_num: usize,
    sparsity: f64,
) -> Result<BalancedStep, PruneError> {
    assert!((0.0..1.0).contains(&sparsity), "sparsity must be in [0,1)");
    if block_num == 0 || m.cols() % block_num != 0 {
        return Err(PruneError::NonDivisibleColumns {
            cols: m.cols(),
            block_num,
        });
    }
    let block_size = m.cols() / block_num;
    let k = keep_per_block(block_size, sparsity);
    let all: Vec<usize> = (0..block_size).collect();
    let mut mask = PruneMask::none_keep(m.rows(), m.cols());
    for row in 0..m.rows() {
        let r = m.row(row);
        for block in 0..block_num {
            let seg = &r[block * block_size..(block + 1) * block_size];
            for off in select_block_topk(seg, &all, k) {
                mask.keep[row * m.cols() + block * block_size + off] = true;
            }
        }
    }
    Ok(BalancedStep {
        mask,
        k,
        achieved_sparsity: 1.0 - k as f64 / block_size as f64,
    })
}

/// Iterative balanced pruning: walk the schedule, mask, hand survivors to the
/// retrain callback, repeat; encode the final survivors.
///
/// Masked positions are never consulted again: each iteration ranks only the
/// entries still alive, and the callback must leave dead positions at zero.
pub fn balanced_prune(
    m: &DenseMatrix,
    block_num: usize,
    schedule: &PruneSchedule,
    mut retrain: Option<&mut dyn FnMut(&DenseMatrix) -> DenseMatrix>,
) -> Result<BalancedSparseMatrix, PruneError> {
    if block_num == 0 || m.cols() % block_num != 0 {
        return Err(PruneError::NonDivisibleColumns {
            cols: m.cols(),
            block_num,
        });
    }
    let block_size = m.cols() / block_num;
    let mut current = m.clone();
    let mut alive = PruneMask::all_keep(m.rows(), m.cols());
    let mut k = block_size;
    for iteration in 1..=schedule.num_iterations {
        let sparsity = schedule_value(schedule, iteration)?;
        k = keep_per_block(block_size, sparsity);
        let mut next = PruneMask::none_keep(m.rows(), m.cols());
        for row in 0..m.rows() {
            let r = current.row(row);
            for block in 0..block_num {
                let base = block * block_size;
                let seg = &r[base..base + block_size];
                let candidates: Vec<usize> = (0..block_size)
                    .filter(|off| alive.keep(row, base + off))
                    .collect();
                for off in select_block_topk(seg, &candidates, k) {
                    next.keep[row * m.cols() + base + off] = true;
                }
            }
        }
        alive = next;
        current = alive.apply(&current);
        if let Some(cb) = retrain.as_mut() {
            let updated = cb(&current);
            if updated.rows() != m.rows() || updated.cols() != m.cols() {
                return Err(PruneError::CallbackDimensionMismatch {
                    expected_rows: m.rows(),
                    expected_cols: m.cols(),
                    rows: updated.rows(),
                    cols: updated.cols(),
                });
            }
            for row in 0..m.rows() {
                for col in 0..m.cols() {
                    if !alive.keep(row, col) && updated.get(row, col) != 0.0 {
                        return Err(PruneError::CallbackRevivedMaskedEntry { row, col });
                    }
                }
            }
            current = updated;
        }
    }
    // encode from the mask rather than the values: a retrained survivor may
    // legitimately sit at zero, and the block structure comes from the mask
    let mut col_indices = Vec::with_capacity(m.rows() * block_num * k);
    let mut values = Vec::with_capacity(m.rows() * block_num * k);
    for row in 0..m.rows() {
        for block in 0..block_num {
            for off in 0..block_size {
                if alive.keep(row, block * block_size + off) {
                    col_indices.push(off as u16);
                    values.push(current.get(row, block * block_size + off));
                }
            }
        }
    }
    Ok(BalancedSparseMatrix::from_parts(
        m.rows(),
        m.cols(),
        block_size,
        k,
        col_indices,
        values,
    ))
}

/// Whole-matrix magnitude pruning: keeps the `ceil(total * (1-sparsity))`
/// largest magnitudes, ties toward the lower (row, col) position.
///
/// Panics if `sparsity` is outside `[0, 1)`.
pub fn random_prune(m: &DenseMatrix, sparsity: f64) -> PruneMask {
    assert!((0.0..1.0).contains(&sparsity), "sparsity must be in [0,1)");
    let total = m.rows() * m.cols();
    let keep_count = ((total as f64) * (1.0 - sparsity)).ceil() as usize;
    let mut mask = PruneMask::none_keep(m.rows(), m.cols());
    if keep_count >= total {
        mask.keep.fill(true);
        return mask;
    }
    let vals = m.values();
    let mut order: Vec<usize> = (0..total).collect();
    let by_magnitude_then_position = |&a: &usize, &b: &usize| {
        vals[b]
            .abs()
            .total_cmp(&vals[a].abs())
            .then_with(|| a.cmp(&b))
    };
    // keep_count >= 1 because sparsity < 1
    order.select_nth_unstable_by(keep_count - 1, by_magnitude_then_position);
    for &idx in &order[..keep_count] {
        mask.keep[idx] = true;
    }
    mask
}

/// Tile scoring rule for block pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockCriterion {
    /// Largest magnitude in the tile represents it.
    Max,
    /// Mean magnitude over the tile represents it.
    Mean,
}

/// Coarse-grained pruning over `bh x bw` tiles: scores each tile by the
/// criterion over magnitudes and keeps the top `ceil(tiles * (1-sparsity))`
/// tiles whole, ties toward the lower tile position.
pub fn block_prune(
    m: &DenseMatrix,
    bh: usize,
    bw: usize,
    sparsity: f64,
    criterion: BlockCriterion,
) -> Result<PruneMask, PruneError> {
    assert!((0.0..1.0).contains(&sparsity), "sparsity must be in [0,1)");
    if bh == 0 || bw == 0 || m.rows() % bh != 0 || m.cols() % bw != 0 {
        return Err(PruneError::NonDivisibleDims {
            rows: m.rows(),
            cols: m.cols(),
            bh,
            bw,
        });
    }
    let tiles_r = m.rows() / bh;
    let tiles_c = m.cols() / bw;
    let num_tiles = tiles_r * tiles_c;
    let mut scores = Vec::with_capacity(num_tiles);
    for tr in 0..tiles_r {
        for tc in 0..tiles_c {
            let mut acc = 0.0f64;
            let mut max = 0.0f32;
            for r in tr * bh..(tr + 1) * bh {
                for c in tc * bw..(tc + 1) * bw {
                    let a = m.get(r, c).abs();
                    acc += a as f64;
                    if a > max {
                        max = a;
                    }
                }
            }
            scores.push(match criterion {
                BlockCriterion::Max => max as f64,
                BlockCriterion::Mean => acc / (bh * bw) as f64,
            });
        }
    }
    let keep_tiles = ((num_tiles as f64) * (1.0 - sparsity)).ceil() as usize;
    let mut order: Vec<usize> = (0..num_tiles).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(&b)));
    let mut mask = PruneMask::none_keep(m.rows(), m.cols());
    for &tile in &order[..keep_tiles.min(num_tiles)] {
        let (tr, tc) = (tile / tiles_c, tile % tiles_c);
        for r in tr * bh..(tr + 1) * bh {
            for c in tc * bw..(tc + 1) * bw {
                mask.keep[r * m.cols() + c] = true;
            }
        }
    }
    Ok(mask)
}

/// Which whole vectors `vector_prune` removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

/// Coarse-grained pruning of whole rows or columns: scores each vector by mean
/// magnitude and masks the `floor(n * sparsity)` lowest scorers, ties toward
/// the lower index.
///
/// Panics if `sparsity` is outside `[0, 1)`.
pub fn vector_prune(m: &DenseMatrix, sparsity: f64, axis: Axis) -> PruneMask {
    assert!((0.0..1.0).contains(&sparsity), "sparsity must be in [0,1)");
    let n = match axis {
        Axis::Row => m.rows(),
        Axis::Col => m.cols(),
    };
    let mut scores = vec![0.0f64; n];
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let a = m.get(r, c).abs() as f64;
            match axis {
                Axis::Row => scores[r] += a,
                Axis::Col => scores[c] += a,
            }
        }
    }
    // mean over the vector length; constant divisor, kept for score readability
    let len = match axis {
        Axis::Row => m.cols(),
        Axis::Col => m.rows(),
    };
    for s in &mut scores {
        *s /= len as f64;
    }
    let drop_count = ((n as f64) * sparsity).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| a.cmp(&b)));
    let mut mask = PruneMask::all_keep(m.rows(), m.cols());
    for &v in &order[..drop_count] {
        match axis {
            Axis::Row => {
                for c in 0..m.cols() {
                    mask.keep[v * m.cols() + c] = false;
                }
            }
            Axis::Col => {
                for r in 0..m.rows() {
                    mask.keep[r * m.cols() + v] = false;
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, v: Vec<f32>) -> DenseMatrix {
        DenseMatrix::new(rows, cols, v).unwrap()
    }

    #[test]
    fn balanced_step_keeps_per_block_topk() {
        let m = dm(1, 8, vec![0.1, -0.5, 0.3, 0.2, 0.9, -0.05, 0.4, 0.6]);
        let step = balanced_prune_step(&m, 2, 0.5).unwrap();
        assert_eq!(step.k, 2);
        let kept: Vec<bool> = step.mask.keep_slice().to_vec();
        assert_eq!(
            kept,
            vec![false, true, true, false, true, false, false, true]
        );
    }

    #[test]
    fn sparsity_zero_keeps_everything() {
        let m = dm(2, 4, vec![0.0; 8]);
        let step = balanced_prune_step(&m, 2, 0.0).unwrap();
        assert_eq!(step.k, 2);
        assert_eq!(step.mask.kept_count(), 8);
        assert!(random_prune(&m, 0.0).kept_count() == 8);
        assert!(vector_prune(&m, 0.0, Axis::Row).kept_count() == 8);
    }

    #[test]
    fn magnitude_tie_breaks_to_lower_column() {
        let m = dm(1, 4, vec![1.0, -1.0, 1.0, -1.0]);
        let step = balanced_prune_step(&m, 1, 0.5).unwrap();
        assert_eq!(step.mask.keep_slice(), &[true, true, false, false]);
        let mask = random_prune(&m, 0.5);
        assert_eq!(mask.keep_slice(), &[true, true, false, false]);
    }

    #[test]
    fn random_prune_examples() {
        let m = dm(2, 2, vec![1.0, -3.0, 2.0, -4.0]);
        let mask = random_prune(&m, 0.5);
        assert_eq!(mask.keep_slice(), &[false, true, false, true]);
        let mask = random_prune(&m, 0.75);
        assert_eq!(mask.keep_slice(), &[false, false, false, true]);
    }

    #[test]
    fn block_criterion_changes_survivor() {
        // tile 0 = {10,0,0,0}, tile 1 = {3,3,3,3}; max prefers 0, mean prefers 1
        let m = dm(2, 4, vec![10.0, 0.0, 3.0, 3.0, 0.0, 0.0, 3.0, 3.0]);
        let max = block_prune(&m, 2, 2, 0.5, BlockCriterion::Max).unwrap();
        assert!(max.keep(0, 0) && !max.keep(0, 2));
        let mean = block_prune(&m, 2, 2, 0.5, BlockCriterion::Mean).unwrap();
        assert!(!mean.keep(0, 0) && mean.keep(0, 2));
    }

    #[test]
    fn single_tile_survives_any_sparsity_below_one() {
        let m = dm(2, 2, vec![0.0, 0.0, 0.0, 0.0]);
        let mask = block_prune(&m, 2, 2, 0.99, BlockCriterion::Max).unwrap();
        assert_eq!(mask.kept_count(), 4);
    }

    #[test]
    fn vector_prune_drops_lowest_mean_row() {
        let m = dm(
            3,
            2,
            vec![0.1, 0.1, 0.5, 0.5, 0.9, 0.9],
        );
        let mask = vector_prune(&m, 1.0 / 3.0, Axis::Row);
        assert_eq!(
            mask.keep_slice(),
            &[false, false, true, true, true, true]
        );
    }

    #[test]
    fn schedule_boundaries_and_midpoint() {
        let s = PruneSchedule::cubic(0.9, 10).unwrap();
        assert_eq!(schedule_value(&s, 0).unwrap(), 0.0);
        assert_eq!(schedule_value(&s, 10).unwrap(), 0.9);
        let mid = schedule_value(&s, 5).unwrap();
        assert!((mid - 0.7875).abs() < 1e-15);
        assert!(matches!(
            schedule_value(&s, 11),
            Err(PruneError::IterationOutOfRange { iteration: 11, .. })
        ));
    }

    #[test]
    fn callback_errors_are_detected() {
        let m = dm(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let schedule = PruneSchedule::cubic(0.5, 2).unwrap();
        let mut grow = |_: &DenseMatrix| dm(2, 4, vec![0.0; 8]);
        assert!(matches!(
            balanced_prune(&m, 1, &schedule, Some(&mut grow)),
            Err(PruneError::CallbackDimensionMismatch { .. })
        ));
        let mut revive = |_: &DenseMatrix| dm(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            balanced_prune(&m, 1, &schedule, Some(&mut revive)),
            Err(PruneError::CallbackRevivedMaskedEntry { .. })
        ));
    }
}
