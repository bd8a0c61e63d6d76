//! Counter-based generator: draw `i` of seed `s` is a pure function of
//! `(s, i)`, so the stream is trivially reproducible in any language.
//!
//! Draw `i` is SplitMix64's output for state `s + (i + 1) * GOLDEN_GAMMA`.

use std::f64::consts::TAU;

use crate::geom::UnitQuat;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Number of draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn at(seed: u64, index: u64) -> u64 {
        mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = Self::at(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n` (multiply-shift; bias below 2^-64 * n).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index of empty range");
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Uniformly random rotation (Shoemake's subgroup algorithm).
    pub fn unit_quat(&mut self) -> UnitQuat {
        let (u1, u2, u3) = (self.next_f64(), self.next_f64(), self.next_f64());
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let (x, y) = (a * (TAU * u2).sin(), a * (TAU * u2).cos());
        let (z, w) = (b * (TAU * u3).sin(), b * (TAU * u3).cos());
        crate::geom::quat_normalize([w, x, y, z]).unwrap_or(UnitQuat::IDENTITY)
    }
}
