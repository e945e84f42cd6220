//! Counter-based deterministic random numbers.
//!
//! The generator hashes `key + counter * GOLDEN` through a 64-bit finalizer,
//! so the n-th sample is a pure function of `(key, n)`. That gives two
//! properties the benchmark harness relies on:
//!
//! * bit-identical streams for a given seed on every platform and process,
//!   because only integer arithmetic and IEEE-754 double operations with a
//!   fixed evaluation order are involved;
//! * cheap splitting: [`Rng::derive`] produces an independent stream per run
//!   index, so repeated runs can execute in any order or in parallel and
//!   still see exactly the sequences they would serially.

use super::NumericsError;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Finalizer with full avalanche; every input bit affects every output bit.
fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic, splittable random number generator.
#[derive(Debug, Clone)]
pub struct Rng {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { key: mix(seed ^ GOLDEN), counter: 0, spare_normal: None }
    }

    /// Independent stream identified by `stream` relative to this generator's
    /// key. Streams derived with distinct indices behave as unrelated
    /// generators; deriving never advances `self`.
    pub fn derive(&self, stream: u64) -> Rng {
        let key = mix(self.key.wrapping_add(mix(stream.wrapping_mul(GOLDEN) ^ GOLDEN)));
        Rng { key, counter: 0, spare_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        out
    }

    /// Uniform sample in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform sample in `[lo, hi)`; degenerate intervals return `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, NumericsError> {
        if lo > hi {
            return Err(NumericsError::InvalidRange { lo, hi });
        }
        Ok(lo + self.unit() * (hi - lo))
    }

    /// Standard normal sample via the Box-Muller transform. Each transform
    /// yields two values; the second is cached and served on the next call.
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        // u1 in (0, 1] so the logarithm stays finite.
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform index in `[0, n)` via fixed-point multiplication (no modulo
    /// bias worth speaking of for the `n` used here).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() needs a nonempty range");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
