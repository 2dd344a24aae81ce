//! Numeric substrate: dense matrices, layer normalization, seeded RNG
//! streams, Adam, finite-difference gradient checking, and 3x3
//! decompositions. Everything runs in 64-bit arithmetic with fixed
//! reduction orders so repeated runs are bit-identical.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod ops;
pub mod rng;
pub mod svd3;

pub use adam::{adam_step, AdamState};
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use ops::{layer_norm, layer_norm_backward, sigmoid, LAYER_NORM_EPS};
pub use rng::{xavier_uniform, StreamKey};
