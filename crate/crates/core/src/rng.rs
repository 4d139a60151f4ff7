//! Deterministic, splittable random streams.
//!
//! Everything stochastic in this crate (weight init, synthetic images, batch
//! composition, input noise) draws from ChaCha8 streams derived from a user
//! seed plus a 64-bit stream id. The generator and all derivations are fixed
//! so that golden tests and the `--strict-deterministic` CLI mode stay valid:
//!
//! * generator: `ChaCha8` keyed via `seed_from_u64(seed)`;
//! * stream id: caller-chosen `u64` (one purpose per id, see call sites);
//! * uniform `f64` in `[0,1)`: top 53 bits of `next_u64`, times 2^-53;
//! * bounded `u64` in `[0,n)`: rejection sampling on the top bits (unbiased);
//! * unit Gaussian: Box-Muller on two uniform draws.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// A single deterministic random stream.
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Stream `stream_id` of the generator family keyed by `seed`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Stream { rng }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }

    /// Uniform integer in `[0, n)`, unbiased via rejection.
    pub fn uniform_u64_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        if n.is_power_of_two() {
            return self.rng.next_u64() & (n - 1);
        }
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.rng.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn uniform_range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.uniform_u64_below(hi - lo + 1)
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        #[cfg(not(feature = "std"))]
        use num_traits::Float as _;
        let u1 = loop {
            let u = self.uniform_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * core::f64::consts::PI * u2;
        r * theta.cos()
    }

    /// Uniform in `[lo, hi)` converted to the pipeline scalar type.
    pub fn uniform_scalar<T: Real>(&mut self, lo: f64, hi: f64) -> T {
        T::from_f64(self.uniform_in(lo, hi))
    }
}
