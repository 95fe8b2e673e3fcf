//! Mini-batch index generation: epoch-shuffled partitions for training and
//! independent uniform subsets for the theory checks.

use super::DatasetError;
use crate::numerics::SeededRng;

/// The index set `S_k` of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndexSet {
    pub indices: Vec<usize>,
    pub iteration: u64,
}

impl BatchIndexSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One epoch of mini-batches: a uniformly shuffled permutation of `0..n`
/// chunked into `⌈n/m⌉` batches. All batches have size `m` except possibly
/// the last, which is used rather than dropped.
pub fn epoch_batches(
    n: usize,
    m: usize,
    rng: &mut SeededRng,
) -> Result<Vec<BatchIndexSet>, DatasetError> {
    if n == 0 || m == 0 || m > n {
        return Err(DatasetError::Parameter(format!(
            "batch size {m} invalid for {n} samples (need 1 <= m <= n)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order
        .chunks(m)
        .enumerate()
        .map(|(iteration, chunk)| BatchIndexSet {
            indices: chunk.to_vec(),
            iteration: iteration as u64,
        })
        .collect())
}

/// One uniform random `m`-subset of `0..n`, independent across calls. Used
/// where the analysis assumes independent batch draws per iteration.
pub fn sample_batch(n: usize, m: usize, rng: &mut SeededRng) -> Result<Vec<usize>, DatasetError> {
    if n == 0 || m == 0 || m > n {
        return Err(DatasetError::Parameter(format!(
            "batch size {m} invalid for {n} samples (need 1 <= m <= n)"
        )));
    }
    // Partial Fisher-Yates: the first m entries of a uniformly shuffled
    // permutation are a uniform m-subset.
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.index(n - i);
        order.swap(i, j);
    }
    order.truncate(m);
    Ok(order)
}
