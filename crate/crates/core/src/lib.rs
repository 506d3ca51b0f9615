//! Architecture-aware generalization bounds for causal temporal
//! convolutional networks trained on β-mixing sequences.
//!
//! The crate bundles:
//!
//! - [`mixing`]: AR(1) generation, β-mixing envelopes, exact β for finite
//!   Markov chains, effective sample sizes;
//! - [`blocking`]: delay selection, block partitions and an exact
//!   total-variation oracle for the blocking inequality;
//! - [`model`]: a dilated causal TCN with ℓ2,1 norm accounting and
//!   projection;
//! - [`training`]: the delayed-feedback projected online learner with
//!   hypothesis averaging;
//! - [`bounds`]: closed-form complexity, regret and generalization bounds,
//!   plus a Monte-Carlo empirical Rademacher oracle;
//! - [`experiments`]: fair and standard grids, deterministic sweeps, a
//!   JSONL result store;
//! - [`analysis`]: power-law fits, Welch tests, effect sizes and constant
//!   calibration;
//! - [`ingest`]: signal loading and preprocessing.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod blocking;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod mixing;
pub mod model;
pub mod training;

pub use error::{Error, Result};
pub use mixing::{MixingProfile, Series};

/// Version string written into result stores and manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
