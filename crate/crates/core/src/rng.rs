//! Deterministic counter-based random number generator.
//!
//! All stochastic pieces of the crate (initialization, dropout, MLM
//! corruption, batch sampling, data splits) draw from this generator so
//! that a fixed seed yields bitwise-identical runs on any machine. The
//! platform RNG is never used.
//!
//! The algorithm is SplitMix64 (Steele, Lea & Flood 2014): the internal
//! state is a plain counter advanced by the golden-ratio increment
//! `0x9E3779B97F4A7C15`, and each output is a finalizer hash of the
//! counter:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! `split` derives an independent child stream by seeding a new generator
//! from the next output word.

#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E3779B97F4A7C15;

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Derive an independent child generator.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    /// Uniform in [0, 1) with 24 bits of precision (exact in f32).
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound). `bound` must be nonzero.
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        // Modulo bias is negligible for the desk-scale bounds used here
        // (bound << 2^64) and keeps the generator a pure counter stream.
        (self.next_u64() % bound as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.next_f32() < p
    }

    /// Approximately standard normal via the Irwin-Hall sum of twelve
    /// uniforms. Uses only additions, so results are bit-identical on any
    /// IEEE-754 platform.
    pub fn next_normal_f32(&mut self) -> f32 {
        let mut acc = 0.0f32;
        for _ in 0..12 {
            acc += self.next_f32();
        }
        acc - 6.0
    }
}
