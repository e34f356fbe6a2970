//! Seeded, keyed random streams.
//!
//! Every random draw in the crate comes from an [`RngStream`], fully determined
//! by a `(seed, stream_id)` pair. The generator is xoshiro256++ whose 256-bit
//! state is filled as
//!
//! ```text
//! mix(x)  = splitmix64 finalizer:
//!           x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
//!           x = (x ^ (x >> 27)) * 0x94D049BB133111EB
//!           x =  x ^ (x >> 31)
//! word(x, k) = mix(x + k * 0x9E3779B97F4A7C15)        (wrapping arithmetic)
//! state = [word(seed, 1), word(seed, 2), word(stream_id, 1), word(stream_id, 2)]
//! ```
//!
//! with the four words serialized little-endian into the 32-byte xoshiro seed.
//! Distinct `(seed, stream_id)` pairs therefore give distinct generator states.
//! Uniform reals on `[0, 1)` take the top 53 bits of a 64-bit output and scale
//! by `2^-53`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Scale factor turning a 53-bit integer into a double in `[0, 1)`.
pub const UNIT_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[inline]
fn word(x: u64, k: u64) -> u64 {
    mix64(x.wrapping_add(k.wrapping_mul(GOLDEN_GAMMA)))
}

/// Well-known stream identifiers used by the library.
pub mod streams {
    /// Pattern generation for synthetic objectives.
    pub const DATASET: u64 = 0x0001;
    /// Batch selection during optimizer runs.
    pub const BATCHES: u64 = 0x0002;
    /// Validation-suite random histories.
    pub const VALIDATION: u64 = 0x0003;

    /// Substream for one Monte Carlo trial of the averaged-uniforms experiment.
    ///
    /// `n` occupies the high 32 bits and the trial index the low 32 bits, so
    /// every `(n, trial)` pair with both below `2^32` gets its own stream.
    pub fn fig2_trial(n: u64, trial: u64) -> u64 {
        (n << 32) | (trial & 0xFFFF_FFFF)
    }
}

/// A deterministic random stream keyed by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let words = [
            word(seed, 1),
            word(seed, 2),
            word(stream_id, 1),
            word(stream_id, 2),
        ];
        let mut bytes = [0u8; 32];
        for (chunk, w) in bytes.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self {
            seed,
            stream_id,
            inner: Xoshiro256PlusPlus::from_seed(bytes),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Top 53 bits of the next output, as an integer in `[0, 2^53)`.
    #[inline]
    pub fn next_u53(&mut self) -> u64 {
        self.inner.next_u64() >> 11
    }

    /// Uniform double in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.next_u53() as f64 * UNIT_53
    }

    /// Uniform double in `[-1, 1)`.
    #[inline]
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
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
