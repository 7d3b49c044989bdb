use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SparcError};

/// A contiguous run of sample positions, `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BatchRange {
    pub start: usize,
    pub end: usize,
}

impl BatchRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn as_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Splits `0..sample_count` into contiguous batches and shuffles the batch
/// order (not the samples). The last batch is short when `batch_size` does
/// not divide `sample_count`.
pub fn contiguous_batch_order(
    sample_count: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<BatchRange>> {
    if batch_size == 0 {
        return Err(SparcError::Config("batch_size must be at least 1".into()));
    }
    let mut batches: Vec<BatchRange> = (0..sample_count)
        .step_by(batch_size)
        .map(|start| BatchRange::new(start, (start + batch_size).min(sample_count)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    batches.shuffle(&mut rng);
    Ok(batches)
}
