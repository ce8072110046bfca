//! Desk-scale laboratory for a window-masking bidirectional language
//! model and its causal / random-MLM baselines on a shared transformer
//! encoder.
//!
//! The crate is organized as:
//! - [`nn`] — deterministic f32 tensors, reverse-mode autodiff, Adam;
//! - [`tokenizer`] — word-level vocabulary and sentence encoding;
//! - [`model`] — the encoder with three pluggable masking regimes;
//! - [`training`] — batched training loops, loss logs, checkpoints;
//! - [`repr`] — representation extraction and language-model scoring;
//! - [`eval`] — STS / SMS / reranking / runtime-benchmark harnesses.

pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod repr;
pub mod rng;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use rng::Rng;
