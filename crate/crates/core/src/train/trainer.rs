//! The deterministic training loop and WSD-style resume.
//!
//! Step `t` runs for `t = 0..=T_end`. At each step the checkpoint for the
//! current iterate `x_t` is written first (when `t` is scheduled), then the
//! minibatch drawn for `t` is evaluated and logged with `lr(t)`, and for
//! `t < T_end` AdamW moves `x_t` to `x_{t+1}`. The row for `T_end` therefore
//! logs the final iterate without updating it.
//!
//! The minibatch at step `t` depends only on `(seed, batch_size, t)`, so a run
//! restarted from any checkpoint replays the same data order.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::checkpoint::{
    checkpoint_file_name, list_checkpoints, load_checkpoint, save_checkpoint, Checkpoint,
};
use super::config::{RunConfig, RunData};
use crate::data::{Batch, BatchPlan, Dataset};
use crate::error::{CheckpointError, Error, Result};
use crate::math::{norm, ParamVector};
use crate::models::{build_model, grad_f64, loss_f64, Differentiable};
use crate::optim::{adamw_step, AdamWConfig, AdamWState, ScheduleKind, ScheduleSpec};

pub const MANIFEST_FILE: &str = "manifest";
pub const LOSS_LOG_FILE: &str = "losses.csv";
pub const LOSS_LOG_HEADER: &str = "step,lr,train_loss,eval_loss";
pub const HELDOUT_LOG_FILE: &str = "heldout.csv";
pub const HELDOUT_LOG_HEADER: &str = "step,heldout_loss";

/// One row of `losses.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    /// Probe-set loss, present on eval steps only.
    pub eval_loss: Option<f64>,
}

impl LossRow {
    fn to_csv(self) -> String {
        match self.eval_loss {
            Some(e) => format!("{},{},{},{}\n", self.step, self.lr, self.train_loss, e),
            None => format!("{},{},{},\n", self.step, self.lr, self.train_loss),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub losses: Vec<LossRow>,
    pub checkpoints: Vec<(u64, PathBuf)>,
    pub final_checkpoint: Checkpoint,
}

/// Steps that always get a checkpoint: start, end of warmup, 80% of the
/// stable phase, decay start and the final step.
pub fn phase_steps(schedule: &ScheduleSpec) -> BTreeSet<u64> {
    let mut s = BTreeSet::from([0, schedule.warmup, schedule.decay_start, schedule.total]);
    if schedule.kind == ScheduleKind::Wsd {
        s.insert(schedule.stable_point(0.8));
    }
    s
}

/// Every step that gets a checkpoint: multiples of `every` plus the phase steps.
pub fn checkpoint_steps(schedule: &ScheduleSpec, every: u64) -> BTreeSet<u64> {
    let mut s = phase_steps(schedule);
    s.extend((0..=schedule.total).step_by(every.max(1) as usize));
    s
}

/// Where optimisation starts: the iterate at `step` and its optimizer state.
#[derive(Clone, Debug)]
pub struct StartState {
    pub step: u64,
    pub params: ParamVector,
    pub adam: AdamWState,
}

impl StartState {
    pub fn fresh(params: ParamVector, config: AdamWConfig) -> Self {
        let d = params.len();
        Self {
            step: 0,
            params,
            adam: AdamWState::new(d, config),
        }
    }
}

/// Everything the loop needs, independent of how the model was built.
pub struct Trainer<'a> {
    pub model: &'a dyn Differentiable,
    /// Canonical model spec text written into checkpoint headers.
    pub model_spec: String,
    pub train: &'a Dataset,
    pub probe: &'a Batch,
    pub heldout: Option<&'a Batch>,
    pub schedule: ScheduleSpec,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub eval_every: u64,
    pub grad_clip: Option<f64>,
}

impl Trainer<'_> {
    fn is_eval_step(&self, t: u64, phases: &BTreeSet<u64>) -> bool {
        t % self.eval_every == 0 || phases.contains(&t)
    }

    /// Runs from `start` to `T_end`, appending to whatever logs `dir` holds.
    ///
    /// `log_bytes` is the current length of `losses.csv`. A non-finite loss
    /// or gradient aborts with the error; checkpoints already written stay.
    pub fn run(&self, start: StartState, dir: &Path, log_bytes: u64) -> Result<Checkpoint> {
        self.schedule.validate()?;
        if start.step > self.schedule.total {
            return Err(Error::ScheduleExhausted {
                step: start.step,
                total: self.schedule.total,
            });
        }
        let phases = phase_steps(&self.schedule);
        let ckpts = checkpoint_steps(&self.schedule, self.checkpoint_every);
        let mut plan = BatchPlan::new(self.train.len(), self.batch_size, self.seed)?;
        let mut losses = BufWriter::new(
            fs::OpenOptions::new()
                .append(true)
                .open(dir.join(LOSS_LOG_FILE))?,
        );
        let mut heldout_log = match self.heldout {
            Some(_) => Some(BufWriter::new(
                fs::OpenOptions::new()
                    .append(true)
                    .open(dir.join(HELDOUT_LOG_FILE))?,
            )),
            None => None,
        };
        let mut offset = log_bytes;
        let StartState {
            step: first,
            mut params,
            mut adam,
        } = start;
        let mut last = None;
        for t in first..=self.schedule.total {
            if t == first || ckpts.contains(&t) {
                losses.flush()?;
                let ck = Checkpoint {
                    model_spec: self.model_spec.clone(),
                    step: t,
                    params: params.clone(),
                    adam: adam.clone(),
                    schedule: self.schedule,
                    rng: plan.rng_state(t),
                    loss_log_offset: offset,
                };
                save_checkpoint(&dir.join(checkpoint_file_name(t)), &ck)?;
                last = Some(ck);
            }
            let batch = self.train.batch(plan.indices(t));
            let lr = self.schedule.lr(t)?;
            let x = params.to_f64();
            let eval_loss = if self.is_eval_step(t, &phases) {
                Some(loss_f64(self.model, &x, self.probe).map_err(|e| e.at_step(t))?)
            } else {
                None
            };
            if let (Some(log), Some(h)) = (heldout_log.as_mut(), self.heldout) {
                if eval_loss.is_some() {
                    let l = loss_f64(self.model, &x, h).map_err(|e| e.at_step(t))?;
                    writeln!(log, "{t},{l}")?;
                }
            }
            let train_loss = if t < self.schedule.total {
                let (loss, mut g) = grad_f64(self.model, &x, &batch).map_err(|e| e.at_step(t))?;
                if let Some(c) = self.grad_clip {
                    let n = norm(&g);
                    if n > c {
                        g.iter_mut().for_each(|v| *v *= c / n);
                    }
                }
                adamw_step(&mut params, &mut adam, &g, lr).map_err(|e| match e {
                    Error::NonFiniteGradient { .. } => Error::NonFiniteGradient { step: t },
                    other => other,
                })?;
                if !params.all_finite() {
                    return Err(Error::NonFinite(format!("parameters after step {t}")));
                }
                loss
            } else {
                loss_f64(self.model, &x, &batch).map_err(|e| e.at_step(t))?
            };
            let row = LossRow {
                step: t,
                lr,
                train_loss,
                eval_loss,
            }
            .to_csv();
            losses.write_all(row.as_bytes())?;
            offset += row.len() as u64;
        }
        losses.flush()?;
        if let Some(log) = heldout_log.as_mut() {
            log.flush()?;
        }
        last.ok_or_else(|| Error::invalid("training loop wrote no checkpoint"))
    }
}

/// Creates `dir`, refusing one that already holds a run.
fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    if dir.join(MANIFEST_FILE).exists() || !list_checkpoints(dir)?.is_empty() {
        return Err(Error::config(format!(
            "{} already contains a run",
            dir.display()
        )));
    }
    Ok(())
}

fn write_manifest(dir: &Path, config: &RunConfig, note: Option<&str>) -> Result<()> {
    let mut text = format!("# wsdscope {}\n", env!("CARGO_PKG_VERSION"));
    if let Some(n) = note {
        text.push_str(&format!("# {n}\n"));
    }
    text.push_str(&config.to_manifest());
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Builds the trainer for `config` over already-loaded data.
fn with_trainer<T>(
    config: &RunConfig,
    data: &RunData,
    f: impl FnOnce(&Trainer<'_>, &crate::models::Model) -> Result<T>,
) -> Result<T> {
    let spec = config.model_spec(&data.train);
    let model = build_model(&spec)?;
    let trainer = Trainer {
        model: &model,
        model_spec: spec.canonical(),
        train: &data.train,
        probe: &data.probe,
        heldout: data.heldout.as_ref(),
        schedule: config.schedule,
        batch_size: config.batch_size,
        seed: config.seed,
        checkpoint_every: config.checkpoint_every,
        eval_every: config.eval_every,
        grad_clip: config.grad_clip,
    };
    f(&trainer, &model)
}

fn artifacts(dir: &Path, final_checkpoint: Checkpoint) -> Result<RunArtifacts> {
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        losses: read_loss_log(&dir.join(LOSS_LOG_FILE))?,
        checkpoints: list_checkpoints(dir)?,
        final_checkpoint,
    })
}

/// Trains `config` from scratch into `dir`.
pub fn train(config: &RunConfig, dir: &Path) -> Result<RunArtifacts> {
    let data = config.load_data()?;
    train_with_data(config, &data, dir)
}

/// [`train`] with data loaded by the caller (lets sweeps share one load).
pub fn train_with_data(config: &RunConfig, data: &RunData, dir: &Path) -> Result<RunArtifacts> {
    prepare_dir(dir)?;
    write_manifest(dir, config, None)?;
    let header = format!("{LOSS_LOG_HEADER}\n");
    fs::write(dir.join(LOSS_LOG_FILE), &header)?;
    if data.heldout.is_some() {
        fs::write(dir.join(HELDOUT_LOG_FILE), format!("{HELDOUT_LOG_HEADER}\n"))?;
    }
    let last = with_trainer(config, data, |trainer, model| {
        let start = StartState::fresh(model.init_params(config.init_seed), config.adam);
        trainer.run(start, dir, header.len() as u64)
    })?;
    artifacts(dir, last)
}

/// Checks that `extended` may continue a run checkpointed at `ck`.
pub fn check_resume(ck: &Checkpoint, extended: &ScheduleSpec) -> Result<()> {
    extended.validate()?;
    let orig = &ck.schedule;
    let fail = |msg: String| Err(Error::IncompatibleSchedule(msg));
    if orig.kind != ScheduleKind::Wsd || extended.kind != ScheduleKind::Wsd {
        return fail("resume continues WSD runs only".into());
    }
    if orig.warmup != extended.warmup {
        return fail(format!("warmup {} differs from original {}", extended.warmup, orig.warmup));
    }
    if orig.peak_lr != extended.peak_lr {
        return fail(format!(
            "peak lr {} differs from original {}",
            extended.peak_lr, orig.peak_lr
        ));
    }
    if ck.step > orig.decay_start {
        return fail(format!(
            "checkpoint step {} is past the original decay start {}",
            ck.step, orig.decay_start
        ));
    }
    if ck.step > extended.decay_start {
        return fail(format!(
            "checkpoint step {} is past the new decay start {}",
            ck.step, extended.decay_start
        ));
    }
    Ok(())
}

/// Continues the run that `config` describes from `checkpoint` under the
/// `extended` schedule, writing a complete run into `dir`.
///
/// Loss rows and checkpoints before the resume step are carried over from
/// the source run directory, so `dir` matches a fresh run of the extended
/// configuration.
pub fn resume(
    config: &RunConfig,
    checkpoint: &Path,
    extended: ScheduleSpec,
    dir: &Path,
) -> Result<RunArtifacts> {
    let data = config.load_data()?;
    resume_with_data(config, &data, checkpoint, extended, dir)
}

pub fn resume_with_data(
    config: &RunConfig,
    data: &RunData,
    checkpoint: &Path,
    extended: ScheduleSpec,
    dir: &Path,
) -> Result<RunArtifacts> {
    let ck = load_checkpoint(checkpoint)?;
    check_resume(&ck, &extended)?;
    let new_config = config.with_schedule(extended);
    let spec = new_config.model_spec(&data.train);
    ck.check_model(&spec).map_err(|source| Error::Checkpoint {
        path: checkpoint.to_path_buf(),
        source,
    })?;
    if ck.adam.config != config.adam {
        return Err(Error::config("optimizer settings differ from the checkpoint"));
    }
    let plan = BatchPlan::new(data.train.len(), config.batch_size, config.seed)?;
    if plan.rng_state(ck.step) != ck.rng {
        return Err(Error::config(
            "checkpoint data order does not match the run config (seed or batch size differ)",
        ));
    }
    let source = checkpoint.parent().unwrap_or(Path::new("."));

    prepare_dir(dir)?;
    write_manifest(
        dir,
        &new_config,
        Some(&format!("resumed at step {} from {}", ck.step, checkpoint.display())),
    )?;
    let log = fs::read(source.join(LOSS_LOG_FILE))
        .map_err(|_| Error::DataMissing(source.join(LOSS_LOG_FILE)))?;
    let prefix = usize::try_from(ck.loss_log_offset)
        .ok()
        .filter(|&n| n <= log.len() && (n == 0 || log[n - 1] == b'\n'))
        .ok_or_else(|| Error::Checkpoint {
            path: checkpoint.to_path_buf(),
            source: CheckpointError::Malformed(format!(
                "loss-log offset {} does not match {}",
                ck.loss_log_offset,
                source.join(LOSS_LOG_FILE).display()
            )),
        })?;
    fs::write(dir.join(LOSS_LOG_FILE), &log[..prefix])?;
    if data.heldout.is_some() {
        let text = fs::read_to_string(source.join(HELDOUT_LOG_FILE))
            .map_err(|_| Error::DataMissing(source.join(HELDOUT_LOG_FILE)))?;
        let mut out = format!("{HELDOUT_LOG_HEADER}\n");
        for line in text.lines().skip(1) {
            let step: u64 = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad heldout row {line:?}")))?;
            if step < ck.step {
                out.push_str(line);
                out.push('\n');
            }
        }
        fs::write(dir.join(HELDOUT_LOG_FILE), out)?;
    }
    for (step, path) in list_checkpoints(source)? {
        if step < ck.step {
            let mut earlier = load_checkpoint(&path)?;
            earlier.schedule = extended;
            save_checkpoint(&dir.join(checkpoint_file_name(step)), &earlier)?;
        }
    }

    let start = StartState {
        step: ck.step,
        params: ck.params.clone(),
        adam: ck.adam.clone(),
    };
    let last = with_trainer(&new_config, data, |trainer, _| {
        trainer.run(start, dir, prefix as u64)
    })?;
    artifacts(dir, last)
}

pub fn read_loss_log(path: &Path) -> Result<Vec<LossRow>> {
    let text = fs::read_to_string(path).map_err(|_| Error::DataMissing(path.to_path_buf()))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_LOG_HEADER) {
        return Err(Error::Format(format!("{} lacks the loss-log header", path.display())));
    }
    lines
        .map(|line| {
            let bad = || Error::Format(format!("bad loss-log row {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LossRow {
                step: f[0].parse().map_err(|_| bad())?,
                lr: f[1].parse().map_err(|_| bad())?,
                train_loss: f[2].parse().map_err(|_| bad())?,
                eval_loss: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad())?)
                },
            })
        })
        .collect()
}
