//! Hessian-vector products, sharpness and curvature along directions.
//!
//! Products are central differences of gradients taken in double precision:
//! `H v ≈ (g(x + ε v̂) - g(x - ε v̂)) ‖v‖ / 2ε` with `v̂ = v / ‖v‖` and
//! `ε = sqrt(f64::EPSILON) (1 + ‖x‖)`.
//!
//! The step follows the precision the gradients are evaluated in (double),
//! not the `f32` storage of checkpoints: perturbed points never round-trip
//! through storage. A step sized for `f32` crosses ReLU kinks often enough
//! to make the product visibly non-linear in `v` on small networks.

use rand_distr::{Distribution, StandardNormal};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, SeededRng};
use crate::math::vector::{dot, norm};
use crate::math::ParamVector;
use crate::models::{grad_f64, Differentiable};

/// Finite-difference step for an iterate of norm `x_norm`.
pub fn fd_step(x_norm: f64) -> f64 {
    f64::EPSILON.sqrt() * (1.0 + x_norm)
}

/// `∇²L(x) v` at double-precision parameters.
pub fn hvp_f64(model: &dyn Differentiable, x: &[f64], probe: &Batch, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != x.len() {
        return Err(Error::shape(format!(
            "hvp direction has length {}, parameters {}",
            v.len(),
            x.len()
        )));
    }
    let v_norm = norm(v);
    if v_norm == 0.0 {
        return Err(Error::ZeroNorm("hvp"));
    }
    let eps = fd_step(norm(x));
    let shifted = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(v)
            .map(|(xi, vi)| xi + sign * eps * (vi / v_norm))
            .collect()
    };
    let (_, g_plus) = grad_f64(model, &shifted(1.0), probe)?;
    let (_, g_minus) = grad_f64(model, &shifted(-1.0), probe)?;
    let scale = v_norm / (2.0 * eps);
    Ok(g_plus
        .iter()
        .zip(&g_minus)
        .map(|(p, m)| (p - m) * scale)
        .collect())
}

/// `∇²L(x) v` at a stored iterate.
pub fn hvp(model: &dyn Differentiable, params: &ParamVector, probe: &Batch, v: &[f64]) -> Result<Vec<f64>> {
    hvp_f64(model, &params.to_f64(), probe, v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharpnessOptions {
    /// Converged once the relative Rayleigh-quotient change drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SharpnessOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sharpness {
    /// Rayleigh quotient `v·Hv` at the final unit iterate.
    pub lambda_max: f64,
    pub eigvec: Vec<f64>,
    pub converged: bool,
    /// Power-iteration updates performed.
    pub iters: usize,
    /// Set when the final quotient is negative: the dominant eigenvalue in
    /// magnitude is then negative and may hide the top one.
    pub negative: bool,
    /// Rayleigh quotient after each update, starting with the random start.
    pub history: Vec<f64>,
}

/// Top Hessian eigenvalue by power iteration on [`hvp_f64`].
///
/// The start vector is a standard normal draw keyed by `seed` and the tag
/// `"sharpness"`. Iteration `k` maps `v_{k-1}` to `v_k = H v_{k-1} / ‖H v_{k-1}‖`
/// and stops once `|λ_k - λ_{k-1}| < tol |λ_k|`.
pub fn sharpness(
    model: &dyn Differentiable,
    params: &ParamVector,
    probe: &Batch,
    options: SharpnessOptions,
    seed: u64,
) -> Result<Sharpness> {
    if !(options.tol > 0.0) {
        return Err(Error::invalid("sharpness tolerance must be positive"));
    }
    if options.max_iter == 0 {
        return Err(Error::invalid("sharpness needs max_iter >= 1"));
    }
    let x = params.to_f64();
    let mut rng = SeededRng::new(derive_seed(seed, "sharpness"));
    let mut v: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|e| *e /= n);

    let mut hv = hvp_f64(model, &x, probe, &v)?;
    let mut lambda = rayleigh(&v, &hv)?;
    let mut history = vec![lambda];
    let mut converged = false;
    let mut iters = 0;
    while iters < options.max_iter {
        let hv_norm = norm(&hv);
        if hv_norm == 0.0 {
            converged = true;
            break;
        }
        v = hv.iter().map(|e| e / hv_norm).collect();
        hv = hvp_f64(model, &x, probe, &v)?;
        let next = rayleigh(&v, &hv)?;
        iters += 1;
        history.push(next);
        let done = (next - lambda).abs() < options.tol * next.abs();
        lambda = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(Sharpness {
        lambda_max: lambda,
        eigvec: v,
        converged,
        iters,
        negative: lambda < 0.0,
        history,
    })
}

fn rayleigh(v: &[f64], hv: &[f64]) -> Result<f64> {
    let q = dot(v, hv);
    if !q.is_finite() {
        return Err(Error::NonFinite("Rayleigh quotient".into()));
    }
    Ok(q)
}

/// `‖∇²L(x̂) v̂‖` for the unit vector along `v`.
pub fn curvature_alignment(
    model: &dyn Differentiable,
    params_hat: &ParamVector,
    probe: &Batch,
    v: &[f64],
) -> Result<f64> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNorm("curvature_alignment"));
    }
    let unit: Vec<f64> = v.iter().map(|e| e / n).collect();
    Ok(norm(&hvp(model, params_hat, probe, &unit)?))
}
