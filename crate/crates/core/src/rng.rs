//! Deterministic random streams.
//!
//! Every trial derives independent streams from a single `u64` seed. A stream
//! is ChaCha8 keyed with the little-endian seed in the first eight key bytes
//! (remaining key bytes zero) and the stream id as the ChaCha stream (nonce).
//! The conversions below are fixed so that draws are reproducible from the
//! raw 64-bit words alone:
//!
//! * `uniform()` = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)` = Lemire's widening multiply with rejection on the low word.
//! * `categorical(p)` = first index whose running sum exceeds `uniform()`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Purpose tags for the independent streams used by one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Environment,
    Action,
    Replay,
    /// Network initialization; the index distinguishes networks of one agent.
    Init(u32),
    /// Free-form stream for tests and tools.
    Aux(u32),
}

impl StreamKind {
    pub fn id(self) -> u64 {
        match self {
            StreamKind::Environment => 1,
            StreamKind::Action => 2,
            StreamKind::Replay => 3,
            StreamKind::Init(k) => 0x100 + k as u64,
            StreamKind::Aux(k) => 0x1_0000 + k as u64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn for_kind(seed: u64, kind: StreamKind) -> Self {
        Self::new(seed, kind.id())
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Samples an index from a probability vector.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left the running sum just below u
        last_positive
    }
}
