//! AdamW and the two learning-rate schedules.

mod adamw;
mod schedule;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use schedule::{lr_cosine, lr_wsd, ScheduleKind, ScheduleSpec};
