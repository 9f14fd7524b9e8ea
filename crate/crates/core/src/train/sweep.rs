//! Cooldown-length sweeps that share one stable-phase prefix.
//!
//! The fraction with the longest cooldown decays earliest, so it is trained
//! from scratch; every other fraction resumes from its decay-start
//! checkpoint. A warmup-cosine run of the same length is the baseline.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::config::{RunConfig, RunData};
use super::trainer::{resume_with_data, train_with_data, RunArtifacts};
use super::checkpoint::checkpoint_file_name;
use crate::error::{Error, Result};
use crate::optim::ScheduleSpec;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "fraction,final_train_loss,final_eval_loss";
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.10, 0.20, 0.35];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Cooldown fraction; `None` for the cosine baseline.
    pub fraction: Option<f64>,
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    pub dir: PathBuf,
}

impl SweepRow {
    pub fn label(&self) -> String {
        match self.fraction {
            Some(f) => f.to_string(),
            None => "cosine".into(),
        }
    }
}

pub fn fraction_dir_name(fraction: f64) -> String {
    format!("wsd_{fraction}")
}

pub const COSINE_DIR: &str = "cosine";

fn row(fraction: Option<f64>, run: &RunArtifacts) -> Result<SweepRow> {
    let last = run
        .losses
        .last()
        .ok_or_else(|| Error::Format("empty loss log".into()))?;
    Ok(SweepRow {
        fraction,
        final_train_loss: last.train_loss,
        final_eval_loss: last
            .eval_loss
            .ok_or_else(|| Error::Format("final step lacks an eval loss".into()))?,
        dir: run.dir.clone(),
    })
}

/// Runs closures on up to `parallel` threads, returning results in input order.
pub fn run_parallel<T: Send>(
    jobs: Vec<Box<dyn FnOnce() -> T + Send + '_>>,
    parallel: usize,
) -> Vec<T> {
    let n = jobs.len();
    let queue = Mutex::new(jobs.into_iter().enumerate().collect::<Vec<_>>());
    let results = Mutex::new((0..n).map(|_| None).collect::<Vec<Option<T>>>());
    std::thread::scope(|s| {
        for _ in 0..parallel.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop();
                let Some((i, f)) = job else { break };
                let out = f();
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Sweeps `fractions` (plus a cosine baseline) for one seed under `dir`.
pub fn sweep(
    config: &RunConfig,
    data: &RunData,
    fractions: &[f64],
    dir: &Path,
    parallel: usize,
) -> Result<Vec<SweepRow>> {
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let Some(&longest) = fractions.last() else {
        return Err(Error::config("sweep needs at least one cooldown fraction"));
    };
    let s = &config.schedule;
    let spec_for = |f: f64| {
        ScheduleSpec::wsd_with_cooldown(s.warmup, s.total, f, s.peak_lr)
            .map_err(|e| Error::config(format!("cooldown fraction {f}: {e}")))
    };
    let specs: Vec<ScheduleSpec> = fractions.iter().map(|&f| spec_for(f)).collect::<Result<_>>()?;
    fs::create_dir_all(dir)?;

    let base_config = config.with_schedule(*specs.last().expect("non-empty"));
    let base_dir = dir.join(fraction_dir_name(longest));
    let cosine_config = config.with_schedule(
        ScheduleSpec::warmup_cosine(s.warmup, s.total, s.peak_lr)
            .map_err(|e| Error::config(e.to_string()))?,
    );
    let cosine_dir = dir.join(COSINE_DIR);
    let mut first = run_parallel(
        vec![
            Box::new(|| train_with_data(&base_config, data, &base_dir)),
            Box::new(|| train_with_data(&cosine_config, data, &cosine_dir)),
        ],
        parallel,
    );
    let cosine = first.pop().expect("two jobs")?;
    let base = first.pop().expect("two jobs")?;

    let base_config = &base_config;
    let resume_from = base_dir.join(checkpoint_file_name(base_config.schedule.decay_start));
    let jobs: Vec<Box<dyn FnOnce() -> Result<RunArtifacts> + Send + '_>> = fractions
        [..fractions.len() - 1]
        .iter()
        .zip(&specs)
        .map(|(&f, &spec)| {
            let out = dir.join(fraction_dir_name(f));
            let from = resume_from.clone();
            let job: Box<dyn FnOnce() -> Result<RunArtifacts> + Send + '_> =
                Box::new(move || resume_with_data(base_config, data, &from, spec, &out));
            job
        })
        .collect();
    let resumed = run_parallel(jobs, parallel);

    let mut rows = Vec::new();
    for (&f, run) in fractions.iter().zip(resumed) {
        rows.push(row(Some(f), &run?)?);
    }
    rows.push(row(Some(longest), &base)?);
    rows.push(row(None, &cosine)?);
    write_sweep_csv(&dir.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

/// Averages per-seed sweeps row by row (rows must line up).
pub fn average_rows(per_seed: &[Vec<SweepRow>], dir: &Path) -> Result<Vec<SweepRow>> {
    let first = per_seed
        .first()
        .ok_or_else(|| Error::invalid("no sweeps to average"))?;
    let k = per_seed.len() as f64;
    first
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut train = 0.0;
            let mut eval = 0.0;
            for seed_rows in per_seed {
                let other = seed_rows
                    .get(i)
                    .filter(|o| o.fraction == r.fraction)
                    .ok_or_else(|| Error::invalid("sweeps have different fractions"))?;
                train += other.final_train_loss;
                eval += other.final_eval_loss;
            }
            Ok(SweepRow {
                fraction: r.fraction,
                final_train_loss: train / k,
                final_eval_loss: eval / k,
                dir: dir.to_path_buf(),
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.label(), r.final_train_loss, r.final_eval_loss);
    }
    fs::write(path, out)?;
    Ok(())
}
