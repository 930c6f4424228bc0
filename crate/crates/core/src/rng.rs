//! Seeded random streams with a fixed, portable algorithm.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed by
//! `seed_from_u64(seed)` and switched to word-stream `stream` with
//! `set_stream`. Uniforms are `(next_u64 >> 11) * 2^-53` in `[0, 1)`.
//! Normals use one Box-Muller pair per draw, keeping the cosine branch:
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. Signs are `+1` when the top bit of
//! `next_u64` is clear.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the library, so distinct roles never share draws.
pub mod streams {
    pub const INPUTS: u64 = 1;
    pub const LABELS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const COMPARATOR: u64 = 4;
    pub const POINTS: u64 = 5;
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        StreamRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Point uniform on `[-1, 1]^d`.
    pub fn cube_point(&mut self, d: usize) -> Vec<f64> {
        (0..d).map(|_| self.uniform_in(-1.0, 1.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_stream_separated() {
        let a: Vec<u64> = {
            let mut r = StreamRng::new(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = StreamRng::new(7, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = StreamRng::new(7, 2);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn draws_in_range_with_plausible_moments() {
        let mut r = StreamRng::new(1, streams::NOISE);
        let n = 20_000;
        let (mut s, mut s2, mut u_sum) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            u_sum += u;
            let z = r.normal();
            s += z;
            s2 += z * z;
        }
        let n = n as f64;
        assert!((u_sum / n - 0.5).abs() < 0.02);
        assert!((s / n).abs() < 0.05);
        assert!((s2 / n - 1.0).abs() < 0.05);
    }
}
