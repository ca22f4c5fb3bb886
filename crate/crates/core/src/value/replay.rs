use std::collections::VecDeque;

use rand::Rng;

/// FIFO-evicting buffer with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
    inserted: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), inserted: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.inserted += 1;
    }

    pub fn extend<I: IntoIterator<Item = T>>(&mut self, items: I) {
        for item in items {
            self.push(item);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total items ever inserted, evicted ones included.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        b.extend(0..5);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(b.inserted(), 5);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(100);
        b.extend(0..100usize);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = vec![0u32; 100];
        let draws = 100_000;
        for x in b.sample(draws, &mut rng) {
            counts[*x] += 1;
        }
        let p = 0.01;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn empty_sample_is_empty() {
        let b: ReplayBuffer<u8> = ReplayBuffer::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(8, &mut rng).is_empty());
    }
}
