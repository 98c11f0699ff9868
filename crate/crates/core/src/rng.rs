// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded randomness.
//!
//! The generator is xoshiro256** with its 256-bit state expanded from a 64-bit
//! seed by splitmix64. Gaussian samples come from `rand_distr::StandardNormal`.
//! Streams are reproducible within this implementation only.

use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

/// Deterministic PRNG seeded from a `u64`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Seeds from a string label, e.g. a token or a weight name.
    pub fn from_label(label: &str) -> Self {
        Self::new(label_seed(label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

/// Folds a string into a 64-bit seed via SHA-256.
pub fn label_seed(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Draws a tensor of i.i.d. standard normal samples.
pub fn sample_normal(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.normal()).collect();
    Tensor::new(shape, data).expect("shape and data length agree")
}
