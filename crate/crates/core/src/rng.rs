//! Seeded random streams.
//!
//! Every trajectory owns one stream identified by `(seed, stream)`, so results
//! do not depend on how trajectories are scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Real;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One standard normal draw. Always sampled in `f64` so that `f32` and
    /// `f64` runs consume identical streams.
    #[inline]
    pub fn normal<T: Real>(&mut self) -> T {
        let z: f64 = self.rng.sample(StandardNormal);
        T::of(z)
    }

    pub fn fill_normal<T: Real>(&mut self, out: &mut [T]) {
        for v in out {
            *v = self.normal();
        }
    }

    pub fn normal_vec<T: Real>(&mut self, d: usize) -> Vec<T> {
        let mut v = vec![T::zero(); d];
        self.fill_normal(&mut v);
        v
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for grid cell `cell` derived from a base seed.
pub fn derive_seed(seed: u64, cell: u64) -> u64 {
    seed ^ mix64(cell)
}
