use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::Domain;

/// Indices into the fully and weakly labeled pools. Fully labeled entries
/// come first in every stacked batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub full: Vec<usize>,
    pub weak: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.full.len() + self.weak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain of each stacked position.
    pub fn domain_mask(&self) -> Vec<Domain> {
        std::iter::repeat_n(Domain::FullyLabeled, self.full.len())
            .chain(std::iter::repeat_n(Domain::WeaklyLabeled, self.weak.len()))
            .collect()
    }
}

/// Shuffled epochs over one pool; reshuffles when exhausted.
#[derive(Debug, Clone)]
struct EpochSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    fn new(len: usize, seed: u64) -> Self {
        let mut s = EpochSampler {
            order: (0..len).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.order.shuffle(&mut s.rng);
        s
    }

    fn take(&mut self, n: usize) -> Vec<usize> {
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

/// Endless, seeded stream of mixed batches.
#[derive(Debug, Clone)]
pub struct BatchStream {
    full: Option<EpochSampler>,
    weak: Option<EpochSampler>,
    n_full: usize,
    n_weak: usize,
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        Some(Batch {
            full: self.full.as_mut().map_or_else(Vec::new, |s| s.take(self.n_full)),
            weak: self.weak.as_mut().map_or_else(Vec::new, |s| s.take(self.n_weak)),
        })
    }
}

/// Batches of `n_full` fully labeled plus `n_weak` weakly labeled frames,
/// drawn without replacement within each pool's epoch.
pub fn make_batches(full_len: usize, weak_len: usize, n_full: usize, n_weak: usize, seed: u64) -> Result<BatchStream> {
    if n_full + n_weak == 0 {
        return Err(Error::Config("batch must contain at least one frame".into()));
    }
    if n_full > 0 && full_len == 0 {
        return Err(Error::Config(format!(
            "{n_full} fully labeled frames per batch requested from an empty pool"
        )));
    }
    if n_weak > 0 && weak_len == 0 {
        return Err(Error::Config(format!(
            "{n_weak} weakly labeled frames per batch requested from an empty pool"
        )));
    }
    Ok(BatchStream {
        full: (n_full > 0).then(|| EpochSampler::new(full_len, seed ^ 0xF011)),
        weak: (n_weak > 0).then(|| EpochSampler::new(weak_len, seed ^ 0x3EA4)),
        n_full,
        n_weak,
    })
}
