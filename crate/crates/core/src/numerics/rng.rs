use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reproducible random stream.
///
/// ChaCha20 keyed by `seed` (expanded through `SeedableRng::seed_from_u64`)
/// with the stream id set to the 64-bit FNV-1a hash of a consumer name.
/// Different consumers therefore draw from independent streams, and adding a
/// consumer never perturbs another one's draws.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha20Rng,
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64, consumer: &str) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a(consumer));
        Self { inner }
    }

    /// Independent child stream, named relative to this one's seed.
    pub fn derive(seed: u64, consumer: &str, index: usize) -> Self {
        Self::new(seed, &format!("{consumer}/{index}"))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.unit();
        if v < hi {
            v
        } else {
            lo
        }
    }

    /// Uniform on `[lo, hi)`, rounded to a value exactly representable as
    /// `f32` that still lies in the half-open range.
    pub fn uniform_f32_exact(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.inner.next_u32() >> 8) as f64 * (1.0 / (1u32 << 24) as f64);
        let v = (lo + (hi - lo) * u) as f32 as f64;
        if v >= lo && v < hi {
            v
        } else {
            lo as f32 as f64
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws an index from an unnormalised weight vector.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}
