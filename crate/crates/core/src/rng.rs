//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 keystream keyed by the master seed and positioned
//! on a stream id equal to the tag. ChaCha is counter based, so the draws a
//! tree sees depend only on `(seed, tag)` and never on which thread grows it
//! or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tags at or above this value are reserved for non-tree purposes; tree `b`
/// of a forest uses tag `b`.
pub const PURPOSE_BASE: u64 = 1 << 63;

/// Stream tags for named purposes.
pub mod tags {
    use super::PURPOSE_BASE;
    pub const FOLDS: u64 = PURPOSE_BASE + 1;
    pub const VALIDATION_SPLIT: u64 = PURPOSE_BASE + 2;
    pub const DGP_COVARIATES: u64 = PURPOSE_BASE + 3;
    pub const DGP_NOISE: u64 = PURPOSE_BASE + 4;
    pub const DGP_TREATMENT: u64 = PURPOSE_BASE + 5;
    pub const TEST_POINTS: u64 = PURPOSE_BASE + 6;
    pub const REPLICATE: u64 = PURPOSE_BASE + 7;
    pub const NUISANCE: u64 = PURPOSE_BASE + 8;
}

/// A single-owner pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

/// Derives the stream for `(seed, tag)`.
pub fn derive_stream(seed: u64, tag: u64) -> RngStream {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(tag);
    RngStream { inner }
}

/// Derives a child master seed, used when one seeded job spawns seeded
/// sub-jobs (replicates, folds, nuisance fits).
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut s = derive_stream(seed, tag);
    s.next_u64()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

impl RngCore for RngStream {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(seed: u64, tag: u64) -> Vec<u8> {
        let mut s = derive_stream(seed, tag);
        let mut out = vec![0u8; 256];
        s.fill_bytes(&mut out);
        out
    }

    #[test]
    fn same_seed_and_tag_repeat() {
        assert_eq!(bytes(42, 0), bytes(42, 0));
    }

    #[test]
    fn tags_separate_streams() {
        assert_ne!(bytes(42, 0), bytes(42, 1));
        assert_ne!(bytes(42, 0), bytes(43, 0));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut s = derive_stream(1, 2);
        let mut p = s.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = derive_stream(9, 9);
        let mean = (0..20_000).map(|_| s.uniform()).sum::<f64>() / 20_000.0;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }
}
