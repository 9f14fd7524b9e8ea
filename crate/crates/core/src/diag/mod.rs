//! Loss-landscape and trajectory diagnostics.
//!
//! All losses, gradients and Hessian-vector products are evaluated on one
//! fixed probe batch per run so that values are comparable across
//! checkpoints and schedules.

pub mod convexity;
pub mod hessian;
pub mod interp;
pub mod norms;
pub mod pca;
pub mod run;
pub mod series;
pub mod stats;

pub use convexity::{positive_fraction, tau_series, update_cosine_series, TAU_DELTA};
pub use hessian::{curvature_alignment, hvp, hvp_f64, sharpness, Sharpness, SharpnessOptions};
pub use interp::interpolate_loss;
pub use norms::{mean_step_displacement, param_norm_series};
pub use pca::{phase_directions, phase_window, trajectory_pca, trajectory_pca_f64, PcaResult, Phase, PhaseDirections};
pub use run::RunDir;
pub use series::{
    to_csv, write_csv, AlignRecord, CosineRecord, CsvRecord, InterpPoint, NormRecord, SeriesFlag,
    SharpnessRecord, SpectrumRecord, TauRecord,
};
