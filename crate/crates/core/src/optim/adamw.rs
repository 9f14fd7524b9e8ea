//! AdamW with decoupled weight decay.
//!
//! Moments are stored in single precision; each step is evaluated in double
//! precision and rounded once on store. Adam is the `weight_decay = 0` case.

use crate::error::{Error, Result};
use crate::math::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    /// Defaults for the convolutional and MLP models.
    pub const CLASSIFIER: AdamWConfig = AdamWConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 5e-4,
    };

    /// Defaults for the decoder.
    pub const DECODER: AdamWConfig = AdamWConfig {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("adam eps must be > 0 and weight decay >= 0"));
        }
        Ok(())
    }
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self::CLASSIFIER
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    /// Completed optimizer steps.
    pub t: u64,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(dim: usize, config: AdamWConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            config,
        }
    }
}

/// One AdamW update in place.
///
/// On a fresh state with a zero gradient the adaptive term is
/// `0 / (0 + eps) = 0`, so only the decay acts.
pub fn adamw_step<G: Copy + Into<f64>>(
    params: &mut ParamVector,
    state: &mut AdamWState,
    grad: &[G],
    lr: f64,
) -> Result<()> {
    let d = params.len();
    if grad.len() != d || state.m.len() != d || state.v.len() != d {
        return Err(Error::shape(format!(
            "adamw: params {d}, grad {}, moments {}/{}",
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate {lr} must be finite and >= 0")));
    }
    let step = state.t + 1;
    if grad.iter().any(|&g| !g.into().is_finite()) {
        return Err(Error::NonFiniteGradient { step });
    }
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let c1 = 1.0 - beta1.powf(step as f64);
    let c2 = 1.0 - beta2.powf(step as f64);
    let p = params.as_mut_slice();
    for i in 0..d {
        let g: f64 = grad[i].into();
        let m = beta1 * f64::from(state.m[i]) + (1.0 - beta1) * g;
        let v = beta2 * f64::from(state.v[i]) + (1.0 - beta2) * g * g;
        let m_hat = m / c1;
        let v_hat = v / c2;
        let x = f64::from(p[i]);
        let x_new = x - lr * (m_hat / (v_hat.sqrt() + eps)) - lr * weight_decay * x;
        state.m[i] = m as f32;
        state.v[i] = v as f32;
        p[i] = x_new as f32;
    }
    state.t = step;
    Ok(())
}
