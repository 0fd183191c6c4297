//! Reproducible pseudo-random numbers for instance generation.
//!
//! The generator is a 64-bit linear congruential generator
//! `state = state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`
//! whose output is the upper 32 bits of the new state. Bounded draws use
//! multiply-shift reduction and shuffles are Fisher-Yates from the back, so
//! streams can be reproduced by any implementation of these three rules.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lcg64 {
    state: u64,
}

const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const INCREMENT: u64 = 1_442_695_040_888_963_407;

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform draw from `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        assert!(n <= u32::MAX as usize, "range too large");
        ((u64::from(self.next_u32()) * n as u64) >> 32) as usize
    }

    /// Uniform draw from `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    /// True with probability `num / den`.
    pub fn chance(&mut self, num: u32, den: u32) -> bool {
        (self.below(den as usize) as u32) < num
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
