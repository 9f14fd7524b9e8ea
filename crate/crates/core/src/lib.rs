//! Training and loss-landscape diagnostics for warmup-stable-decay schedules.
//!
//! The crate trains small models under WSD and warmup-cosine schedules,
//! persists checkpoints bit-exactly, and analyses the resulting trajectories:
//! loss interpolation, Hessian sharpness, trajectory PCA, curvature
//! alignment, quasi-convexity scores and parameter norms.

pub mod data;
pub mod diag;
pub mod error;
pub mod math;
pub mod models;
pub mod optim;
pub mod train;

pub use error::{CheckpointError, Error, Result};
