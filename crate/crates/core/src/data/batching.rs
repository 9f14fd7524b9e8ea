//! Epoch permutations, minibatches, and the fixed probe subset.

use rand::seq::SliceRandom;

use super::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, RngState, SeededRng};

/// Permutation of `0..n` for one epoch; each epoch uses its own stream.
pub fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = SeededRng::with_stream(seed, epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Index lists for one epoch. The final short batch is kept.
pub fn epoch_index_batches(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    check_batch_size(n, batch_size)?;
    Ok(epoch_permutation(n, seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}

pub fn epoch_batches(
    dataset: &Dataset,
    batch_size: usize,
    epoch: u64,
    seed: u64,
) -> Result<Vec<Batch>> {
    Ok(epoch_index_batches(dataset.len(), batch_size, seed, epoch)?
        .iter()
        .map(|idx| dataset.batch(idx))
        .collect())
}

fn check_batch_size(n: usize, batch_size: usize) -> Result<()> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must lie in [1, {n}]"
        )));
    }
    Ok(())
}

/// Sorted indices of the probe subset: the first `size` entries of a
/// permutation keyed by the run seed, or everything if `size >= n`.
pub fn probe_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rng = SeededRng::new(derive_seed(seed, "probe"));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..size].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Maps a global step to its minibatch: step `t` draws batch
/// `t mod batches_per_epoch` of epoch `t / batches_per_epoch`.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    n: usize,
    batch_size: usize,
    seed: u64,
    cached_epoch: Option<(u64, Vec<usize>)>,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        check_batch_size(n, batch_size)?;
        Ok(Self {
            n,
            batch_size,
            seed,
            cached_epoch: None,
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        self.n.div_ceil(self.batch_size) as u64
    }

    pub fn epoch_of(&self, step: u64) -> u64 {
        step / self.batches_per_epoch()
    }

    /// Indices drawn at `step`.
    pub fn indices(&mut self, step: u64) -> &[usize] {
        let epoch = self.epoch_of(step);
        if self.cached_epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.cached_epoch = Some((epoch, epoch_permutation(self.n, self.seed, epoch)));
        }
        let pos = (step % self.batches_per_epoch()) as usize;
        let order = &self.cached_epoch.as_ref().expect("epoch cached").1;
        let start = pos * self.batch_size;
        let end = (start + self.batch_size).min(self.n);
        &order[start..end]
    }

    /// Stream state after shuffling the epoch that contains `step`.
    pub fn rng_state(&self, step: u64) -> RngState {
        let epoch = self.epoch_of(step);
        let mut rng = SeededRng::with_stream(self.seed, epoch);
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut rng);
        rng.state()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use proptest::prelude::*;

    #[test]
    fn batch_sizes_keep_remainder() {
        let sizes: Vec<usize> = epoch_index_batches(10, 3, 0, 0)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
    }

    #[test]
    fn same_seed_same_order() {
        let ds = synthetic_blobs(2, 6, 2, 2.0, 1).unwrap();
        let a = epoch_batches(&ds, 4, 0, 9).unwrap();
        let b = epoch_batches(&ds, 4, 0, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn epochs_reshuffle() {
        assert_ne!(epoch_permutation(50, 3, 0), epoch_permutation(50, 3, 1));
    }

    #[test]
    fn oversized_batch_is_error() {
        assert!(epoch_index_batches(5, 6, 0, 0).is_err());
        assert!(epoch_index_batches(5, 0, 0, 0).is_err());
    }

    #[test]
    fn plan_matches_epoch_batches() {
        let mut plan = BatchPlan::new(10, 3, 4).unwrap();
        let e0 = epoch_index_batches(10, 3, 4, 0).unwrap();
        let e1 = epoch_index_batches(10, 3, 4, 1).unwrap();
        for (t, expected) in e0.iter().chain(&e1).enumerate() {
            assert_eq!(plan.indices(t as u64), expected.as_slice());
        }
    }

    #[test]
    fn probe_is_sorted_subset() {
        let p = probe_indices(100, 10, 0);
        assert_eq!(p.len(), 10);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(probe_indices(5, 10, 0), vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn epoch_covers_every_index_once(n in 1usize..200, b in 1usize..64, seed in any::<u64>(), epoch in 0u64..5) {
            let b = b.min(n);
            let mut all: Vec<usize> = epoch_index_batches(n, b, seed, epoch).unwrap().concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
