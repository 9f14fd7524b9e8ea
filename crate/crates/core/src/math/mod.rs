//! Deterministic numerics shared by every other module.

pub mod eigen;
pub mod rng;
pub mod vector;

pub use rng::{derive_seed, seeded_stream, RngState, SeededRng};
pub use vector::{cosine_similarity, dot, norm, ParamVector};
