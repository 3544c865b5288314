//! Keyed pseudorandom streams.
//!
//! Every consumer asks for a stream by `(master_seed, stream_id)`. The stream
//! key is derived by hashing the id with FNV-1a and mixing it with the seed
//! through SplitMix64; the key seeds a ChaCha8 generator, whose output is
//! platform independent. Two consumers therefore never share state, and the
//! numbers a client sees do not depend on which other clients ran first.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::numkit::Matrix;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a hash from an intermediate state.
pub fn fnv1a64_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub const FNV1A64_OFFSET: u64 = FNV_OFFSET;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct SeededRng {
    master_seed: u64,
    stream_id: String,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let mut state = master_seed ^ fnv1a64(stream_id.as_bytes()).rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            master_seed,
            stream_id,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent stream named `"{self.stream_id}/{label}"` under the same master seed.
    pub fn derive(&self, label: &str) -> Self {
        Self::new(self.master_seed, format!("{}/{}", self.stream_id, label))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        mean + std * z
    }

    /// Gamma(shape, 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Dirichlet(concentration · 1_k) via normalized Gamma draws.
    /// Returns `None` if every Gamma draw underflowed to zero.
    pub fn dirichlet_symmetric(&mut self, concentration: f64, k: usize) -> Option<Vec<f64>> {
        let draws: Vec<f64> = (0..k).map(|_| self.gamma(concentration)).collect();
        let sum: f64 = draws.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return None;
        }
        Some(draws.into_iter().map(|g| g / sum).collect())
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal(0.0, std))
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform(lo, hi))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
