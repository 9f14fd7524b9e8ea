use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding a checkpoint file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic bytes {found:?}, expected \"WSDL\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },
    #[error("model spec digest mismatch")]
    DigestMismatch,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint header: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero-norm vector passed to {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite loss {value}{}", step_suffix(*.step))]
    NonFiniteLoss { value: f64, step: Option<u64> },

    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("schedule exhausted: step {step} exceeds total {total}")]
    ScheduleExhausted { step: u64, total: u64 },

    #[error("incompatible schedule: {0}")]
    IncompatibleSchedule(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("corrupt dataset: {0}")]
    Corrupt(String),

    #[error("data not found: {}", .0.display())]
    DataMissing(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing checkpoint for step {step} ({purpose})")]
    MissingCheckpoint { step: u64, purpose: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("checkpoint {}: {source}", path.display())]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn step_suffix(step: Option<u64>) -> String {
    match step {
        Some(s) => format!(" at step {s}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches a training step to a loss/gradient failure that did not carry one.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Error::NonFiniteLoss { value, step: None } => Error::NonFiniteLoss {
                value,
                step: Some(step),
            },
            other => other,
        }
    }

    /// True for failures caused by numerical blow-up during training.
    pub fn is_numeric_abort(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. } | Error::NonFinite(_)
        )
    }
}
