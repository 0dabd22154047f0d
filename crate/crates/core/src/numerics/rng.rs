//! Counter-based random streams.
//!
//! A stream is keyed by a base seed plus an ordered list of `(name, value)`
//! labels. The key is hashed into a ChaCha20 seed, so any consumer can
//! rebuild its stream from its labels alone without touching shared state.
//! Parallel chains therefore draw the same numbers whatever order they run in.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RngStream {
    base_seed: u64,
    labels: Vec<(String, u64)>,
    rng: ChaCha20Rng,
}

fn stream_key(base_seed: u64, labels: &[(String, u64)]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"langdaug-rng-v1");
    hasher.update(base_seed.to_le_bytes());
    for (name, value) in labels {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(value.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// Build the stream for `(base_seed, labels)`.
///
/// Panics if `labels` is empty: every consumer must identify itself.
pub fn derive_stream(base_seed: u64, labels: &[(&str, u64)]) -> RngStream {
    assert!(!labels.is_empty(), "rng stream needs at least one label");
    let labels: Vec<(String, u64)> = labels.iter().map(|(n, v)| (n.to_string(), *v)).collect();
    RngStream::from_owned(base_seed, labels)
}

impl RngStream {
    fn from_owned(base_seed: u64, labels: Vec<(String, u64)>) -> Self {
        let rng = ChaCha20Rng::from_seed(stream_key(base_seed, &labels));
        Self {
            base_seed,
            labels,
            rng,
        }
    }

    /// A fresh stream whose labels extend this stream's labels by one tag.
    /// The child does not depend on how many draws the parent has made.
    pub fn child(&self, name: &str, value: u64) -> RngStream {
        let mut labels = self.labels.clone();
        labels.push((name.to_string(), value));
        RngStream::from_owned(self.base_seed, labels)
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn labels(&self) -> &[(String, u64)] {
        &self.labels
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }

    /// Rademacher sign.
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        use rand_distr::{Distribution, Poisson};
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).map(|d| d.sample(&mut self.rng) as u64).unwrap_or(0)
    }
}
