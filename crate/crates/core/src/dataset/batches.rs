use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng, stream_seed};

use super::Group;

/// Gender-balanced mini-batch schedule over a pool of examples.
///
/// Every batch holds `batch_size / 2` examples of each group. Per epoch the
/// larger group is visited once in shuffled order; the smaller group is
/// visited once and then topped up by draws with replacement. The final
/// batch is completed the same way, so no batch is ever short.
#[derive(Clone, Debug)]
pub struct BalancedBatches {
    male: Vec<usize>,
    female: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl BalancedBatches {
    /// `groups[i]` is the group of example `i`.
    pub fn new(groups: &[Group], batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "batch size must be even and >= 2, got {batch_size}"
            )));
        }
        let pick = |g: Group| -> Vec<usize> {
            groups.iter().enumerate().filter(|(_, x)| **x == g).map(|(i, _)| i).collect()
        };
        let (male, female) = (pick(Group::Male), pick(Group::Female));
        if male.is_empty() || female.is_empty() {
            return Err(Error::Imbalance(format!(
                "both groups are required ({} male, {} female)",
                male.len(),
                female.len()
            )));
        }
        Ok(Self {
            male,
            female,
            batch_size,
            seed: stream_seed(seed, "batches"),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.male.len().max(self.female.len()).div_ceil(self.batch_size / 2)
    }

    /// Batches of example indices for `epoch`, deterministic in (seed, epoch).
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = rng(mix_seed(self.seed, epoch as u64));
        let half = self.batch_size / 2;
        let slots = self.batches_per_epoch() * half;
        let mut fill = |pool: &[usize]| -> Vec<usize> {
            let mut order = pool.to_vec();
            order.shuffle(&mut rng);
            while order.len() < slots {
                order.push(pool[rng.random_range(0..pool.len())]);
            }
            order
        };
        let male = fill(&self.male);
        let female = fill(&self.female);
        male.chunks(half)
            .zip(female.chunks(half))
            .map(|(m, f)| {
                let mut b: Vec<usize> = m.iter().chain(f).copied().collect();
                b.shuffle(&mut rng);
                b
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn groups(m: usize, f: usize) -> Vec<Group> {
        std::iter::repeat_n(Group::Male, m)
            .chain(std::iter::repeat_n(Group::Female, f))
            .collect()
    }

    fn per_group(batch: &[usize], g: &[Group]) -> (usize, usize) {
        let m = batch.iter().filter(|&&i| g[i] == Group::Male).count();
        (m, batch.len() - m)
    }

    #[test]
    fn equal_pools() {
        let g = groups(100, 100);
        let b = BalancedBatches::new(&g, 4, 0).unwrap();
        let e = b.epoch(0);
        assert_eq!(e.len(), 50);
        assert!(e.iter().all(|batch| per_group(batch, &g) == (2, 2)));
    }

    #[test]
    fn minority_is_oversampled() {
        let g = groups(10, 4);
        let b = BalancedBatches::new(&g, 4, 0).unwrap();
        let e = b.epoch(0);
        assert_eq!(e.len(), 5);
        assert!(e.iter().all(|batch| per_group(batch, &g) == (2, 2)));
        let females: Vec<usize> = e.iter().flatten().copied().filter(|&i| g[i] == Group::Female).collect();
        assert_eq!(females.len(), 10);
        // all four female examples appear, some repeat
        assert_eq!(females.iter().collect::<HashSet<_>>().len(), 4);
        // every male example appears exactly once
        let mut males: Vec<usize> = e.iter().flatten().copied().filter(|&i| g[i] == Group::Male).collect();
        males.sort_unstable();
        assert_eq!(males, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn odd_batch_and_missing_group() {
        assert!(matches!(BalancedBatches::new(&groups(4, 4), 3, 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(BalancedBatches::new(&groups(4, 0), 4, 0), Err(Error::Imbalance(_))));
    }

    #[test]
    fn epochs_differ_but_are_reproducible() {
        let g = groups(30, 20);
        let b = BalancedBatches::new(&g, 8, 5).unwrap();
        assert_eq!(b.epoch(1), b.epoch(1));
        assert_ne!(b.epoch(1), b.epoch(2));
    }

    proptest! {
        #[test]
        fn always_half_per_group(m in 1usize..80, f in 1usize..80, half in 1usize..70, seed in any::<u64>()) {
            let g = groups(m, f);
            let b = BalancedBatches::new(&g, 2 * half, seed).unwrap();
            for batch in b.epoch(3) {
                prop_assert_eq!(per_group(&batch, &g), (half, half));
            }
        }
    }
}
