//! Parameter-norm and displacement tracking.

use super::series::NormRecord;
use crate::math::ParamVector;

/// `(step, ‖x_i‖, ‖x_{i+1} - x_i‖)` per checkpoint; the last has no displacement.
pub fn param_norm_series(checkpoints: &[(u64, ParamVector)]) -> Vec<NormRecord> {
    checkpoints
        .iter()
        .enumerate()
        .map(|(i, (step, x))| NormRecord {
            step: *step,
            param_norm: x.norm(),
            update_norm: checkpoints.get(i + 1).map(|(_, next)| {
                next.sub_f64(x).iter().map(|d| d * d).sum::<f64>().sqrt()
            }),
        })
        .collect()
}

/// Mean displacement per optimizer step over records whose step lies in
/// `[lo, hi)`, normalising each gap by its length in steps.
pub fn mean_step_displacement(records: &[NormRecord], lo: u64, hi: u64) -> Option<f64> {
    let rates: Vec<f64> = records
        .windows(2)
        .filter(|w| w[0].step >= lo && w[1].step <= hi)
        .filter_map(|w| {
            let gap = (w[1].step - w[0].step) as f64;
            w[0].update_norm.map(|u| u / gap)
        })
        .collect();
    super::stats::mean(&rates)
}
