//! Seeded, splittable random streams.
//!
//! Every consumer of randomness (init, data, weight noise, dropout masks,
//! per-epoch validation, ...) derives its own named stream from a root seed.
//! Streams derived with the same `(seed, label)` are identical; streams with
//! different labels are statistically independent ChaCha streams. Derivation
//! uses the stream's key, not its draw position, so a parent can be split at
//! any time without disturbing determinism.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    inner: ChaCha12Rng,
}

/// FNV-1a over the label bytes, mixed with the parent key by splitmix64.
fn derive_key(parent: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(parent ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        StreamRng {
            key: seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.key
    }

    /// Child stream for a named purpose. Independent of draws made so far.
    pub fn derive(&self, label: &str) -> StreamRng {
        StreamRng::new(derive_key(self.key, label))
    }

    /// Child stream for an indexed purpose, e.g. one per epoch or member.
    pub fn derive_indexed(&self, label: &str, index: usize) -> StreamRng {
        self.derive(&format!("{label}.{index}"))
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal_tensor(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal()).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn normal_tensor_scaled(&mut self, shape: &[usize], sd: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| sd * self.normal()).collect();
        Tensor::new(shape.to_vec(), data)
    }

    /// Bernoulli(1-p) keep mask scaled by 1/(1-p) (inverted dropout).
    pub fn dropout_mask(&mut self, len: usize, p: f64) -> Tensor {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0,1)");
        let scale = 1.0 / (1.0 - p);
        let data = (0..len)
            .map(|_| if self.uniform() < p { 0.0 } else { scale })
            .collect();
        Tensor::vector(data)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}
