//! Warmup-stable-decay and warmup-cosine learning-rate schedules.
//!
//! Both warm up linearly from 0 to the peak over `warmup` steps and reach
//! exactly 0 at `total`. WSD then holds the peak until `decay_start` and
//! decays linearly; cosine anneals over everything after warmup.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Wsd,
    WarmupCosine,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Wsd => "wsd",
            ScheduleKind::WarmupCosine => "cosine",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// `T_w`.
    pub warmup: u64,
    /// `T_c`; equals `warmup` for cosine.
    pub decay_start: u64,
    /// `T_end`.
    pub total: u64,
    pub peak_lr: f64,
}

impl ScheduleSpec {
    pub fn wsd(warmup: u64, decay_start: u64, total: u64, peak_lr: f64) -> Result<Self> {
        let spec = Self {
            kind: ScheduleKind::Wsd,
            warmup,
            decay_start,
            total,
            peak_lr,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// WSD whose cooldown spans `fraction` of `total` (rounded to steps).
    pub fn wsd_with_cooldown(warmup: u64, total: u64, fraction: f64, peak_lr: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!("cooldown fraction {fraction} outside (0, 1)")));
        }
        let cooldown = (fraction * total as f64).round() as u64;
        Self::wsd(warmup, total.saturating_sub(cooldown), total, peak_lr)
    }

    pub fn warmup_cosine(warmup: u64, total: u64, peak_lr: f64) -> Result<Self> {
        let spec = Self {
            kind: ScheduleKind::WarmupCosine,
            warmup,
            decay_start: warmup,
            total,
            peak_lr,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::invalid(format!("peak lr {} must be finite and >= 0", self.peak_lr)));
        }
        let ok = match self.kind {
            ScheduleKind::Wsd => {
                0 < self.warmup && self.warmup <= self.decay_start && self.decay_start < self.total
            }
            ScheduleKind::WarmupCosine => {
                0 < self.warmup && self.warmup < self.total && self.decay_start == self.warmup
            }
        };
        if !ok {
            return Err(Error::invalid(format!(
                "{} schedule needs 0 < T_w <= T_c < T_end, got T_w={} T_c={} T_end={}",
                self.kind.name(),
                self.warmup,
                self.decay_start,
                self.total
            )));
        }
        Ok(())
    }

    pub fn lr(&self, t: u64) -> Result<f64> {
        match self.kind {
            ScheduleKind::Wsd => lr_wsd(t, self),
            ScheduleKind::WarmupCosine => lr_cosine(t, self),
        }
    }

    pub fn cooldown_len(&self) -> u64 {
        self.total - self.decay_start
    }

    /// Step at `fraction` of the way through the stable phase.
    pub fn stable_point(&self, fraction: f64) -> u64 {
        self.warmup + (fraction * (self.decay_start - self.warmup) as f64).floor() as u64
    }

    /// Step at `fraction` of the way through the cooldown.
    pub fn cooldown_point(&self, fraction: f64) -> u64 {
        self.decay_start + (fraction * self.cooldown_len() as f64).floor() as u64
    }
}

fn check_step(t: u64, spec: &ScheduleSpec) -> Result<()> {
    if t > spec.total {
        return Err(Error::ScheduleExhausted {
            step: t,
            total: spec.total,
        });
    }
    Ok(())
}

pub fn lr_wsd(t: u64, spec: &ScheduleSpec) -> Result<f64> {
    check_step(t, spec)?;
    let eta = spec.peak_lr;
    Ok(if t <= spec.warmup {
        eta * (t as f64 / spec.warmup as f64)
    } else if t <= spec.decay_start {
        eta
    } else {
        eta * (1.0 - (t - spec.decay_start) as f64 / (spec.total - spec.decay_start) as f64)
    })
}

pub fn lr_cosine(t: u64, spec: &ScheduleSpec) -> Result<f64> {
    check_step(t, spec)?;
    let eta = spec.peak_lr;
    Ok(if t <= spec.warmup {
        eta * (t as f64 / spec.warmup as f64)
    } else {
        let progress = (t - spec.warmup) as f64 / (spec.total - spec.warmup) as f64;
        eta * 0.5 * (1.0 + (PI * progress).cos())
    })
}
