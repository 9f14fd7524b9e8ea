//! Principal components of checkpoint clouds.
//!
//! With `m` points in `d ≫ m` dimensions the components come from the
//! `m x m` Gram matrix `G = X Xᵀ / m` of the centered rows: an eigenpair
//! `(λ, w)` of `G` lifts to the unit direction `Xᵀ w / ‖Xᵀ w‖`, which has
//! the same eigenvalue under the covariance `Xᵀ X / m`.

use rayon::prelude::*;

use super::series::SpectrumRecord;
use crate::error::{Error, Result};
use crate::math::eigen::symmetric_eigen;
use crate::math::vector::{dot, norm};
use crate::math::ParamVector;
use crate::optim::ScheduleSpec;

/// Most components counted in the explained-variance denominator.
pub const MAX_PC: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    /// Unit components, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the returned components.
    pub eigenvalues: Vec<f64>,
    /// `ρ_j = λ_j / Σ_{i ≤ n_PC} λ_i` for the returned components.
    pub ratios: Vec<f64>,
    /// All `m` eigenvalues of the Gram matrix, clamped at zero.
    pub spectrum: Vec<f64>,
    /// `n_PC = min(m - 1, 10)`.
    pub n_pc: usize,
}

impl PcaResult {
    /// Total centered variance (trace of the covariance).
    pub fn total_variance(&self) -> f64 {
        self.spectrum.iter().sum()
    }

    /// `component,eigenvalue,rho` rows for the first `n_PC` eigenvalues.
    pub fn spectrum_records(&self) -> Vec<SpectrumRecord> {
        let denom: f64 = self.spectrum[..self.n_pc].iter().sum();
        self.spectrum[..self.n_pc]
            .iter()
            .enumerate()
            .map(|(j, &eigenvalue)| SpectrumRecord {
                component: j + 1,
                eigenvalue,
                rho: eigenvalue / denom,
            })
            .collect()
    }
}

/// PCA of `points` (all the same length), returning the top `k` components.
///
/// Components whose eigenvalue is negligible next to the largest (below
/// `1e-10` of it) are not returned, since their directions are not
/// determined by the data; `k` may therefore exceed the result length.
pub fn trajectory_pca_f64(points: &[Vec<f64>], k: usize) -> Result<PcaResult> {
    let m = points.len();
    if m < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 points, got {m}")));
    }
    if k == 0 || k > m - 1 {
        return Err(Error::invalid(format!("PCA with {m} points supports 1..={} components, got {k}", m - 1)));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::shape("PCA points differ in length"));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (s, x) in mean.iter_mut().zip(p) {
            *s += x;
        }
    }
    mean.iter_mut().for_each(|s| *s /= m as f64);
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let mut gram = vec![0.0; m * m];
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| dot(&centered[i], &centered[j]) / m as f64).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
    }
    let trace: f64 = (0..m).map(|i| gram[i * m + i]).sum();
    if trace <= 0.0 {
        return Err(Error::Degenerate("all PCA points are identical".into()));
    }
    let eig = symmetric_eigen(&gram, m)?;
    let spectrum: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0)).collect();
    let n_pc = (m - 1).min(MAX_PC);
    let denom: f64 = spectrum[..n_pc].iter().sum();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        if spectrum[j] <= 1e-10 * spectrum[0] {
            break;
        }
        let w = &eig.vectors[j];
        let mut u = vec![0.0; d];
        for (row, &wi) in centered.iter().zip(w) {
            for (uc, x) in u.iter_mut().zip(row) {
                *uc += wi * x;
            }
        }
        // one Gram-Schmidt pass against earlier components for round-off
        for prev in &components {
            let c = dot(&u, prev);
            for (uc, p) in u.iter_mut().zip(prev) {
                *uc -= c * p;
            }
        }
        let n = norm(&u);
        u.iter_mut().for_each(|x| *x /= n);
        fix_sign(&mut u);
        components.push(u);
        eigenvalues.push(spectrum[j]);
    }
    let ratios = eigenvalues.iter().map(|l| l / denom).collect();
    Ok(PcaResult {
        components,
        eigenvalues,
        ratios,
        spectrum,
        n_pc,
    })
}

pub fn trajectory_pca(points: &[ParamVector], k: usize) -> Result<PcaResult> {
    let pts: Vec<Vec<f64>> = points.iter().map(ParamVector::to_f64).collect();
    trajectory_pca_f64(&pts, k)
}

/// Makes the entry of largest magnitude positive (first one on ties).
fn fix_sign(u: &mut [f64]) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Stable,
    Cooldown,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Stable => "stable",
            Phase::Cooldown => "cooldown",
        }
    }
}

/// Inclusive step window covering `fraction` of a phase next to the decay
/// start: the end of the stable phase or the start of the cooldown.
/// `fraction = 1` gives the whole phase.
pub fn phase_window(schedule: &ScheduleSpec, phase: Phase, fraction: f64) -> (u64, u64) {
    let tc = schedule.decay_start;
    match phase {
        Phase::Stable => {
            let len = (fraction * (tc - schedule.warmup) as f64).floor() as u64;
            (tc - len, tc)
        }
        Phase::Cooldown => (tc, schedule.cooldown_point(fraction)),
    }
}

/// Checkpoints whose step lies in `window`.
pub fn in_window(
    checkpoints: &[(u64, ParamVector)],
    window: (u64, u64),
) -> Vec<&(u64, ParamVector)> {
    checkpoints
        .iter()
        .filter(|(s, _)| (window.0..=window.1).contains(s))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PhaseDirections {
    pub v_s: Vec<f64>,
    pub v_d: Vec<f64>,
    pub stable: PcaResult,
    pub cooldown: PcaResult,
    pub stable_window: (u64, u64),
    pub cooldown_window: (u64, u64),
}

/// First principal components of the last `fraction` of the stable phase
/// and the first `fraction` of the cooldown.
pub fn phase_directions(
    checkpoints: &[(u64, ParamVector)],
    schedule: &ScheduleSpec,
    fraction: f64,
) -> Result<PhaseDirections> {
    let mut pcs = Vec::new();
    let mut windows = Vec::new();
    for phase in [Phase::Stable, Phase::Cooldown] {
        let window = phase_window(schedule, phase, fraction);
        let cloud: Vec<ParamVector> = in_window(checkpoints, window)
            .into_iter()
            .map(|(_, p)| p.clone())
            .collect();
        if cloud.len() < 2 {
            return Err(Error::MissingCheckpoint {
                step: window.0,
                purpose: format!(
                    "{} window [{}, {}] holds {} checkpoint(s), needs 2",
                    phase.name(),
                    window.0,
                    window.1,
                    cloud.len()
                ),
            });
        }
        pcs.push(trajectory_pca(&cloud, 1)?);
        windows.push(window);
    }
    let cooldown = pcs.pop().expect("two phases");
    let stable = pcs.pop().expect("two phases");
    Ok(PhaseDirections {
        v_s: stable.components[0].clone(),
        v_d: cooldown.components[0].clone(),
        stable,
        cooldown,
        stable_window: windows[0],
        cooldown_window: windows[1],
    })
}
