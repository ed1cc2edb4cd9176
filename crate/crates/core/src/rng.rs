//! Counter-based pseudorandom streams.
//!
//! Every value is a pure function of `(seed, stream, index)`:
//!
//! ```text
//! key   = splitmix64(seed ^ splitmix64(stream))
//! value = splitmix64(key + index * 0x9E3779B97F4A7C15)
//! ```
//!
//! where `splitmix64` is the standard finalizer (Steele, Lea & Flood). Uniform
//! doubles take the top 53 bits; Gaussian samples use Box-Muller on two
//! consecutive uniforms. The construction is trivially reproducible in any
//! language with wrapping 64-bit arithmetic.

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: splitmix64(seed ^ splitmix64(stream)),
            counter: 0,
        }
    }

    /// Value at an absolute position of the stream, independent of the cursor.
    pub fn at(&self, index: u64) -> u64 {
        splitmix64(self.key.wrapping_add(index.wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        // Lemire's multiply-shift; the bias is below 2^-32 for n < 2^32.
        ((self.next_u64() >> 32).wrapping_mul(n as u64) >> 32) as usize
    }

    /// Standard normal sample.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates over a scratch buffer).
    pub fn distinct(&mut self, n: usize, k: usize, scratch: &mut alloc::vec::Vec<usize>) -> usize {
        scratch.clear();
        scratch.extend(0..n);
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.below(n - i);
            scratch.swap(i, j);
        }
        k
    }
}
