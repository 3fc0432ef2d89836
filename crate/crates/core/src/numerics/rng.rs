use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Seeded random stream identified by `(seed, stream)`.
///
/// The generator key is the SHA-256 of the seed and the stream label, so
/// differently labelled streams are independent and every
/// `(seed, stream, draw index)` triple reproduces the same draw.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: String,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, stream: impl Into<String>) -> Self {
        let stream = stream.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(stream.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        RngState {
            seed,
            stream,
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Child stream `"<stream>/<label>"` under the same seed. Forking does
    /// not advance `self`.
    pub fn fork(&self, label: &str) -> RngState {
        RngState::new(self.seed, format!("{}/{label}", self.stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> &str {
        &self.stream
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
