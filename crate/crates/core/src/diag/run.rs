//! Diagnostics over a finished run directory.
//!
//! Everything here is a function of the run's checkpoint files and the probe
//! batch rebuilt from its manifest; nothing in the directory is modified
//! except the CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::convexity::{tau_series, update_cosine_series, TAU_DELTA};
use super::hessian::{curvature_alignment, sharpness, SharpnessOptions};
use super::interp::interpolate_loss;
use super::norms::param_norm_series;
use super::pca::{phase_directions, phase_window, trajectory_pca, Phase, PcaResult};
use super::series::{
    write_csv, AlignRecord, CosineRecord, InterpPoint, NormRecord, SharpnessRecord,
    TauRecord,
};
use crate::error::{Error, Result};
use crate::math::ParamVector;
use crate::models::{build_model, Model};
use crate::optim::ScheduleSpec;
use crate::train::{list_checkpoints, load_checkpoint, RunConfig, RunData, MANIFEST_FILE};

/// Default number of interpolation points.
pub const DEFAULT_INTERP_POINTS: usize = 25;
/// Share of each phase next to the decay start used for phase directions.
pub const PHASE_WINDOW: f64 = 0.2;

pub const INTERP_STABLE_FILE: &str = "interp_stable.csv";
pub const INTERP_COOLDOWN_FILE: &str = "interp_cooldown.csv";
pub const SHARPNESS_FILE: &str = "sharpness.csv";
pub const PCA_STABLE_FILE: &str = "pca_stable.csv";
pub const PCA_COOLDOWN_FILE: &str = "pca_cooldown.csv";
pub const ALIGN_FILE: &str = "align.csv";
pub const TAU_FILE: &str = "tau.csv";
pub const COSINE_FILE: &str = "cosine.csv";
pub const NORMS_FILE: &str = "norms.csv";

/// A run directory opened for analysis.
pub struct RunDir {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub data: RunData,
    pub model: Model,
    pub checkpoints: Vec<(u64, PathBuf)>,
}

impl RunDir {
    /// Opens `dir`, rebuilding model and probe from its manifest.
    /// `data_dir` fills in a dataset location the manifest leaves open.
    pub fn open(dir: &Path, data_dir: Option<PathBuf>) -> Result<Self> {
        let manifest = dir.join(MANIFEST_FILE);
        if !manifest.is_file() {
            return Err(Error::DataMissing(manifest));
        }
        let config = crate::train::ConfigMap::read(&manifest)?
            .resolve()?
            .with_data_dir_fallback(data_dir);
        let data = config.load_data()?;
        let model = build_model(&config.model_spec(&data.train))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            checkpoints: list_checkpoints(dir)?,
            config,
            data,
            model,
        })
    }

    pub fn schedule(&self) -> &ScheduleSpec {
        &self.config.schedule
    }

    pub fn steps(&self) -> Vec<u64> {
        self.checkpoints.iter().map(|(s, _)| *s).collect()
    }

    /// Parameters at `step`, checked against the run's model.
    pub fn params(&self, step: u64, purpose: &str) -> Result<ParamVector> {
        let path = self
            .checkpoints
            .iter()
            .find(|(s, _)| *s == step)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::MissingCheckpoint {
                step,
                purpose: purpose.to_string(),
            })?;
        let ck = load_checkpoint(path)?;
        ck.check_model(self.model.spec())
            .map_err(|source| Error::Checkpoint {
                path: path.clone(),
                source,
            })?;
        Ok(ck.params)
    }

    /// All checkpoints with `lo <= step <= hi`.
    pub fn params_in(&self, lo: u64, hi: u64) -> Result<Vec<(u64, ParamVector)>> {
        self.checkpoints
            .iter()
            .filter(|(s, _)| (lo..=hi).contains(s))
            .map(|(s, _)| Ok((*s, self.params(*s, "listed checkpoint")?)))
            .collect()
    }

    /// Stable-phase (80% ↔ decay start) and cooldown (decay start ↔ end)
    /// interpolations.
    pub fn interp(&self, n_points: usize) -> Result<(Vec<InterpPoint>, Vec<InterpPoint>)> {
        let s = self.schedule();
        let p80 = self.params(s.stable_point(0.8), "80% of the stable phase")?;
        let pc = self.params(s.decay_start, "decay start")?;
        let pe = self.params(s.total, "final step")?;
        let probe = &self.data.probe;
        Ok((
            interpolate_loss(&self.model, &p80, &pc, n_points, probe)?,
            interpolate_loss(&self.model, &pc, &pe, n_points, probe)?,
        ))
    }

    /// Sharpness at every checkpoint in `[lo, hi]`.
    pub fn sharpness(&self, lo: u64, hi: u64, options: SharpnessOptions) -> Result<Vec<SharpnessRecord>> {
        let points = self.params_in(lo, hi)?;
        if points.is_empty() {
            return Err(Error::MissingCheckpoint {
                step: lo,
                purpose: format!("sharpness over [{lo}, {hi}]"),
            });
        }
        points
            .par_iter()
            .map(|(step, x)| {
                let s = sharpness(&self.model, x, &self.data.probe, options, self.config.seed)?;
                Ok(SharpnessRecord {
                    step: *step,
                    lambda_max: s.lambda_max,
                    iters: s.iters,
                    converged: s.converged,
                })
            })
            .collect()
    }

    /// Step window covering a whole phase.
    pub fn phase_range(&self, phase: Phase) -> (u64, u64) {
        phase_window(self.schedule(), phase, 1.0)
    }

    /// PCA of the stable-phase and cooldown checkpoint clouds.
    pub fn pca(&self) -> Result<(PcaResult, PcaResult)> {
        let mut out = Vec::new();
        for phase in [Phase::Stable, Phase::Cooldown] {
            let (lo, hi) = self.phase_range(phase);
            let cloud: Vec<ParamVector> = self.params_in(lo, hi)?.into_iter().map(|(_, p)| p).collect();
            if cloud.len() < 2 {
                return Err(Error::MissingCheckpoint {
                    step: lo,
                    purpose: format!(
                        "{} PCA over [{lo}, {hi}] has {} checkpoint(s), needs 2",
                        phase.name(),
                        cloud.len()
                    ),
                });
            }
            out.push(trajectory_pca(&cloud, 1)?);
        }
        let d = out.pop().expect("two phases");
        let s = out.pop().expect("two phases");
        Ok((s, d))
    }

    /// `‖∇²L(x̂) v‖` at the decay start for the stable and cooldown directions.
    pub fn align(&self) -> Result<Vec<AlignRecord>> {
        let s = self.schedule();
        let (lo, _) = phase_window(s, Phase::Stable, PHASE_WINDOW);
        let (_, hi) = phase_window(s, Phase::Cooldown, PHASE_WINDOW);
        let points = self.params_in(lo, hi)?;
        let dirs = phase_directions(&points, s, PHASE_WINDOW)?;
        let x_hat = self.params(s.decay_start, "decay start")?;
        let probe = &self.data.probe;
        Ok(vec![
            AlignRecord {
                direction: "stable".into(),
                hv_norm: curvature_alignment(&self.model, &x_hat, probe, &dirs.v_s)?,
            },
            AlignRecord {
                direction: "cooldown".into(),
                hv_norm: curvature_alignment(&self.model, &x_hat, probe, &dirs.v_d)?,
            },
        ])
    }

    /// τ for post-warmup checkpoints before the end, against the final iterate.
    pub fn tau(&self) -> Result<Vec<TauRecord>> {
        let s = self.schedule();
        let x_star = self.params(s.total, "final step")?;
        let its: Vec<(u64, ParamVector)> = self
            .params_in(s.warmup, s.total)?
            .into_iter()
            .filter(|(t, _)| *t < s.total)
            .collect();
        tau_series(&self.model, &its, &x_star, &self.data.probe, TAU_DELTA)
    }

    /// Update-gradient cosines between consecutive post-warmup checkpoints.
    pub fn cosine(&self) -> Result<Vec<CosineRecord>> {
        let s = self.schedule();
        let its = self.params_in(s.warmup, s.total)?;
        if its.len() < 2 {
            return Err(Error::MissingCheckpoint {
                step: s.warmup,
                purpose: "update cosines need two post-warmup checkpoints".into(),
            });
        }
        update_cosine_series(&self.model, &its, &self.data.probe)
    }

    pub fn norms(&self) -> Result<Vec<NormRecord>> {
        let all = self.params_in(0, u64::MAX)?;
        if all.is_empty() {
            return Err(Error::MissingCheckpoint {
                step: 0,
                purpose: "norms need at least one checkpoint".into(),
            });
        }
        Ok(param_norm_series(&all))
    }

    /// Runs every diagnostic into `out`, alongside a copy of the manifest.
    pub fn report(&self, out: &Path, n_points: usize, options: SharpnessOptions) -> Result<()> {
        fs::create_dir_all(out)?;
        fs::copy(self.dir.join(MANIFEST_FILE), out.join(MANIFEST_FILE))?;
        let (stable, cooldown) = self.interp(n_points)?;
        write_csv(&out.join(INTERP_STABLE_FILE), &stable)?;
        write_csv(&out.join(INTERP_COOLDOWN_FILE), &cooldown)?;
        let (lo, hi) = self.phase_range(Phase::Cooldown);
        write_csv(&out.join(SHARPNESS_FILE), &self.sharpness(lo, hi, options)?)?;
        let (s, d) = self.pca()?;
        write_csv(&out.join(PCA_STABLE_FILE), &s.spectrum_records())?;
        write_csv(&out.join(PCA_COOLDOWN_FILE), &d.spectrum_records())?;
        write_csv(&out.join(ALIGN_FILE), &self.align()?)?;
        write_csv(&out.join(TAU_FILE), &self.tau()?)?;
        write_csv(&out.join(COSINE_FILE), &self.cosine()?)?;
        write_csv(&out.join(NORMS_FILE), &self.norms()?)?;
        Ok(())
    }
}

