//! Contiguous block layouts of a global array across ranks.

use crate::error::{Error, Result};

/// Rank `i` holds global indices `displs[i] .. displs[i] + counts[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    counts: Vec<usize>,
    displs: Vec<usize>,
    n: usize,
}

impl Distribution {
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyGroup);
        }
        let mut displs = Vec::with_capacity(counts.len());
        let mut n = 0usize;
        for &c in &counts {
            displs.push(n);
            n = n
                .checked_add(c)
                .ok_or_else(|| Error::InvalidArgument("distribution size overflows".into()))?;
        }
        Ok(Distribution { counts, displs, n })
    }

    /// `n` elements over `p` ranks, the first `n % p` ranks holding one extra.
    pub fn even(n: usize, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::EmptyGroup);
        }
        Self::from_counts((0..p).map(|r| n / p + usize::from(r < n % p)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn displs(&self) -> &[usize] {
        &self.displs
    }

    pub fn count(&self, rank: usize) -> usize {
        self.counts[rank]
    }

    pub fn range(&self, rank: usize) -> std::ops::Range<usize> {
        self.displs[rank]..self.displs[rank] + self.counts[rank]
    }

    /// Rank holding global index `index`.
    ///
    /// # Panics
    /// If `index >= n`.
    pub fn owner(&self, index: usize) -> usize {
        assert!(index < self.n, "index {index} outside 0..{}", self.n);
        // Last rank whose block starts at or before `index` and is non-empty.
        let upper = self.displs.partition_point(|&d| d <= index);
        (0..upper)
            .rev()
            .find(|&r| self.counts[r] > 0)
            .expect("some block contains the index")
    }
}
