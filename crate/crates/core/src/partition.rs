//! Contiguous block distribution of `n` elements over `p` workers.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("need at least one worker")]
    NoWorkers,
    #[error("{p} workers for {n} elements")]
    TooManyWorkers { n: usize, p: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub n: usize,
    pub p: usize,
    /// Inclusive `(l, r)` bounds per worker.
    pub bounds: Vec<(usize, usize)>,
}

/// The first `n mod p` workers get one extra element.
pub fn partition(n: usize, p: usize) -> Result<Partition, PartitionError> {
    if p == 0 {
        return Err(PartitionError::NoWorkers);
    }
    if p > n {
        return Err(PartitionError::TooManyWorkers { n, p });
    }
    let base = n / p;
    let extra = n % p;
    let mut bounds = Vec::with_capacity(p);
    let mut l = 0;
    for i in 0..p {
        let len = base + usize::from(i < extra);
        bounds.push((l, l + len - 1));
        l += len;
    }
    Ok(Partition { n, p, bounds })
}

impl Partition {
    pub fn len(&self, worker: usize) -> usize {
        let (l, r) = self.bounds[worker];
        r - l + 1
    }

    pub fn range(&self, worker: usize) -> Range<usize> {
        let (l, r) = self.bounds[worker];
        l..r + 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.p).map(|w| self.len(w)).collect()
    }

    pub fn is_even(&self) -> bool {
        self.n % self.p == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(partition(10, 4).unwrap().sizes(), vec![3, 3, 2, 2]);
        assert_eq!(partition(8, 8).unwrap().sizes(), vec![1; 8]);
        assert_eq!(partition(7, 1).unwrap().bounds, vec![(0, 6)]);
        assert_eq!(partition(3, 4), Err(PartitionError::TooManyWorkers { n: 3, p: 4 }));
        assert_eq!(partition(3, 0), Err(PartitionError::NoWorkers));
    }
}
