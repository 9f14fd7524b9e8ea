//! Run configuration, the training loop, checkpoints and cooldown sweeps.

pub mod checkpoint;
pub mod config;
pub mod sweep;
mod trainer;

pub use checkpoint::{
    checkpoint_file_name, list_checkpoints, load_checkpoint, save_checkpoint, Checkpoint,
};
pub use config::{ConfigMap, DataSource, ModelChoice, RunConfig, RunData};
pub use sweep::{
    average_rows, fraction_dir_name, sweep, write_sweep_csv, SweepRow, COSINE_DIR, DEFAULT_FRACTIONS,
    SWEEP_FILE, SWEEP_HEADER,
};
pub use trainer::{
    check_resume, checkpoint_steps, phase_steps, read_loss_log, resume, resume_with_data, train,
    train_with_data, LossRow, RunArtifacts, StartState, Trainer, HELDOUT_LOG_FILE,
    HELDOUT_LOG_HEADER, LOSS_LOG_FILE, LOSS_LOG_HEADER, MANIFEST_FILE,
};
