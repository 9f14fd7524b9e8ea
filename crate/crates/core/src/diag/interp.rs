//! Loss along the straight line between two iterates.

use super::series::InterpPoint;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::math::ParamVector;
use crate::models::{loss_f64, Differentiable};

/// `L((1 - α) p_a + α p_b)` at `α = i / (n_points - 1)`.
///
/// The endpoints reproduce `p_a` and `p_b` exactly, so their losses equal
/// direct evaluations.
pub fn interpolate_loss(
    model: &dyn Differentiable,
    p_a: &ParamVector,
    p_b: &ParamVector,
    n_points: usize,
    probe: &Batch,
) -> Result<Vec<InterpPoint>> {
    if n_points < 2 {
        return Err(Error::invalid("interpolation needs at least 2 points"));
    }
    if p_a.len() != p_b.len() {
        return Err(Error::shape(format!(
            "interpolating vectors of length {} and {}",
            p_a.len(),
            p_b.len()
        )));
    }
    let a = p_a.to_f64();
    let b = p_b.to_f64();
    let mut x = vec![0.0; a.len()];
    (0..n_points)
        .map(|i| {
            let alpha = i as f64 / (n_points - 1) as f64;
            for ((xi, ai), bi) in x.iter_mut().zip(&a).zip(&b) {
                *xi = (1.0 - alpha) * ai + alpha * bi;
            }
            Ok(InterpPoint {
                alpha,
                loss: loss_f64(model, &x, probe)?,
            })
        })
        .collect()
}

/// Fraction of consecutive pairs where the loss goes up.
pub fn increase_fraction(points: &[InterpPoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let ups = points.windows(2).filter(|w| w[1].loss > w[0].loss).count();
    ups as f64 / (points.len() - 1) as f64
}

/// Index of the smallest loss (first on ties).
pub fn argmin(points: &[InterpPoint]) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss))
        .map(|(i, _)| i)
}
