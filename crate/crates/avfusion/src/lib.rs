//! Audio-visual fusion networks for multi-label video classification,
//! built from scratch: a reverse-mode autodiff tape, attention and gated
//! residual layers, a fifteen-entry architecture catalog, AdamW training,
//! ranking metrics, and binary dataset/checkpoint formats.

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod parallel;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod trainer;
