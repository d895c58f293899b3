//! Deterministic, splittable pseudo-random streams.
//!
//! Each stream wraps a xoshiro256++ generator (256-bit state). The state is
//! filled from a SplitMix64 sequence keyed by `(seed, stream_id)`, so the
//! output sequence is a pure function of that pair. [`PrngStream::split`]
//! draws two words from the parent and uses them as the child's
//! `(seed, stream_id)`, which keeps the derivation tree-safe: children of
//! children never share state with their ancestors.
//!
//! Uniforms use the top 53 bits: `u = ((x >> 11) + 0.5) · 2⁻⁵³`, which lies
//! strictly inside (0, 1).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

const STREAM_MIX: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrngStream {
    inner: Xoshiro256PlusPlus,
    seed: u64,
    stream_id: u64,
}

impl PrngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut mixer = SplitMix64::seed_from_u64(seed ^ stream_id.wrapping_mul(STREAM_MIX));
        let mut state = [0u8; 32];
        mixer.fill_bytes(&mut state);
        // xoshiro's all-zero state is a fixed point; SplitMix64 output makes
        // that practically impossible but guard anyway.
        if state.iter().all(|&b| b == 0) {
            state[0] = 1;
        }
        PrngStream {
            inner: Xoshiro256PlusPlus::from_seed(state),
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derives an independent child stream, advancing `self` by two draws.
    pub fn split(&mut self) -> PrngStream {
        let seed = self.next_u64();
        let id = self.next_u64();
        PrngStream::with_stream(seed, id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Uniform integer in `0..n` by rejection (no modulo bias). `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Standard normal via the cosine branch of Box–Muller (two uniforms per
    /// draw).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exp(1) by inversion.
    pub fn exponential(&mut self) -> f64 {
        -self.uniform01().ln()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
