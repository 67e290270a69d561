use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{config_err, Result};
use crate::netcore::Matrix;
use crate::rng::StreamRng;
use crate::streams::Dataset;

/// Labeled source samples kept for replay; sampled uniformly with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Dataset,
    rng: StreamRng,
    accesses: usize,
}

impl ReplayBuffer {
    /// Keeps a uniform subsample (without replacement) of `round(fraction·n)`
    /// samples, at least one.
    pub fn new(source: &Dataset, fraction: f64, mut rng: StreamRng) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(config_err!("replay fraction must lie in (0, 1], got {fraction}"));
        }
        if source.is_empty() {
            return Err(config_err!("replay needs a non-empty source set"));
        }
        let keep = (libm::round(fraction * source.len() as f64) as usize).clamp(1, source.len());
        let mut picked = index::sample(&mut rng, source.len(), keep).into_vec();
        picked.sort_unstable();
        Ok(Self { data: source.subset(&picked), rng, accesses: 0 })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Number of [`ReplayBuffer::sample`] calls so far.
    pub fn accesses(&self) -> usize {
        self.accesses
    }

    pub fn sample(&mut self, n: usize) -> (Matrix, Vec<usize>) {
        self.accesses += 1;
        let idx: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..self.data.len())).collect();
        (self.data.x.select_rows(&idx), idx.iter().map(|&i| self.data.y[i]).collect())
    }
}
