// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-attention bending for a toy text-to-video diffusion transformer.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`rng`]: deterministic `f64` numerics.
//! - [`bend_ops`]: spatial transforms on `frames × height × width` volumes.
//! - [`dit`]: a seeded video DiT whose cross-attention calls an [`dit::AttentionHook`].
//! - [`bender`]: targeting and the reshape/transform/renormalize/flatten hook.
//! - [`pipeline`]: a single bent generation.
//! - [`sweep`]: config parsing, combinatorial expansion, execution, and media output.

// Negated comparisons are how validation rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bend_ops;
pub mod bender;
pub mod dit;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
