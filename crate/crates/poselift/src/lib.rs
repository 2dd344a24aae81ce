//! 2D-to-3D human pose lifting over time.
//!
//! Given a sequence of 2D joint detections, a layer-normalized LSTM
//! encoder/decoder with residual decoder connections predicts the
//! root-relative 3D joint locations for every frame of the sequence.
//! Training optimizes a mean-squared-error term plus a weighted temporal
//! smoothness penalty on the first differences of the predicted 3D poses,
//! with the weights split by joint group (torso/head, legs, arms).
//!
//! The crate is self-contained: dense linear algebra, layer normalization,
//! Adam, backpropagation through time, Procrustes alignment, and the
//! evaluation protocols are all implemented here in 64-bit arithmetic with
//! seeded, bit-reproducible randomness.
//!
//! Module map:
//! - [`skeleton`]: joint model, root-relative convention, joint groups
//! - [`numeric`]: matrices, layer norm, RNG streams, Adam, gradient checking
//! - [`pipeline`]: ingestion, normalization, camera transforms, windowing,
//!   noise injection, synthetic data
//! - [`model`]: the LN-LSTM sequence-to-sequence network and checkpoints
//! - [`loss`]: composite objective and its exact gradient
//! - [`trainer`]: deterministic training loop with resume support
//! - [`evaluator`]: error protocols, sliding-window inference, baselines

pub mod error;
pub mod evaluator;
pub mod loss;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod skeleton;
pub mod trainer;

pub use error::{Error, Result};
