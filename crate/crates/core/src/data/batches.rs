use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::SslSplit;
use crate::rng::stream_rng;

/// Draws indices without replacement, reshuffling at each pass.
#[derive(Clone, Debug)]
struct CyclicSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl CyclicSampler {
    fn new(pool: &[usize], rng: ChaCha8Rng) -> Self {
        let mut s = Self { order: pool.to_vec(), cursor: 0, rng };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn take(&mut self, n: usize) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Infinite paired stream of labeled and unlabeled index batches. Both
/// batches hold exactly `batch` indices, unless the pool is empty.
#[derive(Clone, Debug)]
pub struct BatchStream {
    batch: usize,
    labeled: CyclicSampler,
    unlabeled: CyclicSampler,
}

impl BatchStream {
    pub fn new(split: &SslSplit, batch: usize, seed: u64) -> Self {
        Self {
            batch,
            labeled: CyclicSampler::new(&split.labeled, stream_rng(seed, 0xba7c, 0)),
            unlabeled: CyclicSampler::new(&split.unlabeled, stream_rng(seed, 0xba7c, 1)),
        }
    }
}

impl Iterator for BatchStream {
    type Item = (Vec<usize>, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        Some((self.labeled.take(self.batch), self.unlabeled.take(self.batch)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batches_and_epoch_coverage() {
        let split = SslSplit { labeled: (0..5).collect(), unlabeled: (5..12).collect() };
        let mut stream = BatchStream::new(&split, 4, 9);
        let mut seen = Vec::new();
        for _ in 0..5 {
            let (l, u) = stream.next().unwrap();
            assert_eq!((l.len(), u.len()), (4, 4));
            seen.extend(l);
        }
        let mut first_pass = seen[..5].to_vec();
        first_pass.sort_unstable();
        assert_eq!(first_pass, vec![0, 1, 2, 3, 4]);
        let small = SslSplit { labeled: vec![3], unlabeled: vec![] };
        let (l, u) = BatchStream::new(&small, 3, 0).next().unwrap();
        assert_eq!((l, u.len()), (vec![3, 3, 3], 0));
    }
}
