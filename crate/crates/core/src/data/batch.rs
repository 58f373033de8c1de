use crate::numerics::Prng;

/// Seeded mini-batch order over `n` samples.
///
/// Epoch `e` visits a permutation of `0..n` drawn from stream `e` of the seed,
/// so any epoch can be reproduced without replaying earlier ones. The final
/// batch may be short.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    len: usize,
    batch_size: usize,
    root: Prng,
}

impl BatchIterator {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        Self {
            len,
            batch_size,
            root: Prng::new(seed),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn permutation(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len).collect();
        self.root.derive(epoch as u64).shuffle(&mut order);
        order
    }

    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = Vec<usize>> {
        let order = self.permutation(epoch);
        let size = self.batch_size;
        (0..self.batches_per_epoch()).map(move |b| {
            let end = ((b + 1) * size).min(order.len());
            order[b * size..end].to_vec()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_is_a_permutation() {
        let it = BatchIterator::new(37, 16, 4);
        let batches: Vec<Vec<usize>> = it.epoch(2).collect();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[2].len(), 5);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn order_depends_on_seed_and_epoch() {
        let a = BatchIterator::new(50, 8, 1);
        let b = BatchIterator::new(50, 8, 1);
        assert_eq!(a.permutation(3), b.permutation(3));
        assert_ne!(a.permutation(3), a.permutation(4));
        assert_ne!(
            a.permutation(3),
            BatchIterator::new(50, 8, 2).permutation(3)
        );
    }
}
