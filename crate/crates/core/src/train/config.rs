//! Line-based `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored; unknown keys are
//! errors. Keys whose defaults depend on other keys (learning rate, warmup,
//! cadences, ...) are resolved once, and [`RunConfig::to_manifest`] writes
//! every resolved value so that a manifest replays the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::data::{load_cifar10, probe_indices, Batch, BlobSpec, Dataset, Split};
use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, SeededRng};
use crate::models::{join, parse_list, DecoderSpec, ModelKind, ModelSpec};
use crate::optim::{AdamWConfig, ScheduleKind, ScheduleSpec};

/// Keys accepted in config files and `--set` overrides, in manifest order.
pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "mlp.hidden",
    "decoder.context",
    "decoder.width",
    "decoder.blocks",
    "decoder.heads",
    "init_seed",
    "data",
    "data.dir",
    "data.subset",
    "data.seed",
    "blobs.classes",
    "blobs.per_class",
    "blobs.dim",
    "blobs.separation",
    "heldout_size",
    "schedule",
    "steps",
    "warmup",
    "cooldown",
    "decay_start",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "grad_clip",
    "batch_size",
    "checkpoint_every",
    "eval_every",
    "probe_size",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub enum ModelChoice {
    CifarCnn2,
    /// Hidden widths; input and output widths come from the dataset.
    Mlp { hidden: Vec<usize> },
    TinyDecoder(DecoderSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Blobs(BlobSpec),
    /// `subset = 0` uses the full training split.
    Cifar10 { dir: Option<PathBuf>, subset: usize },
    Chars { path: Option<PathBuf> },
}

impl DataSource {
    pub fn name(&self) -> &'static str {
        match self {
            DataSource::Blobs(_) => "blobs",
            DataSource::Cifar10 { .. } => "cifar10",
            DataSource::Chars { .. } => "chars",
        }
    }
}

/// A fully resolved run description.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub init_seed: u64,
    pub data: DataSource,
    pub data_seed: u64,
    /// Held-out examples evaluated alongside the probe (0 disables).
    pub heldout_size: usize,
    pub schedule: ScheduleSpec,
    pub adam: AdamWConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub checkpoint_every: u64,
    pub eval_every: u64,
    pub probe_size: usize,
    pub seed: u64,
}

/// Loaded training data for a run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub train: Dataset,
    pub probe: Batch,
    pub heldout: Option<Batch>,
}

/// Raw key/value pairs in the order they were set.
#[derive(Clone, Debug, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

/// Pairs of keys where setting one clears the other.
const EXCLUSIVE: &[(&str, &str)] = &[("cooldown", "decay_start")];

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            map.set(k.trim(), v.trim())
                .map_err(|e| Error::config(format!("line {}: {}", lineno + 1, strip(e))))?;
        }
        Ok(map)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(format!("unknown key {key:?}")));
        }
        for &(a, b) in EXCLUSIVE {
            if key == a {
                self.values.remove(b);
            } else if key == b {
                self.values.remove(a);
            }
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("bad value {v:?} for {key}"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::from_map(self)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        ConfigMap::parse(text)?.resolve()
    }

    fn from_map(map: &ConfigMap) -> Result<Self> {
        let seed: u64 = map.or("seed", 0)?;
        let model_name = map.get("model").unwrap_or("mlp");
        let model = match model_name {
            "cifarcnn2" => ModelChoice::CifarCnn2,
            "mlp" => ModelChoice::Mlp {
                hidden: match map.get("mlp.hidden") {
                    Some(v) => parse_list(v).map_err(|e| Error::config(strip(e)))?,
                    None => vec![64, 64],
                },
            },
            "tinydecoder" => {
                let d = DecoderSpec::default();
                ModelChoice::TinyDecoder(DecoderSpec {
                    vocab: d.vocab,
                    context: map.or("decoder.context", d.context)?,
                    width: map.or("decoder.width", d.width)?,
                    blocks: map.or("decoder.blocks", d.blocks)?,
                    heads: map.or("decoder.heads", d.heads)?,
                })
            }
            other => return Err(Error::config(format!("unknown model {other:?}"))),
        };
        let decoder = matches!(model, ModelChoice::TinyDecoder(_));

        let data_dir = map.get("data.dir").filter(|s| !s.is_empty()).map(PathBuf::from);
        let default_data = match model {
            ModelChoice::CifarCnn2 => "cifar10",
            ModelChoice::Mlp { .. } => "blobs",
            ModelChoice::TinyDecoder(_) => "chars",
        };
        let data = match map.get("data").unwrap_or(default_data) {
            "blobs" => DataSource::Blobs(BlobSpec {
                classes: map.or("blobs.classes", 10)?,
                per_class: map.or("blobs.per_class", 200)?,
                dim: map.or("blobs.dim", 16)?,
                separation: map.or("blobs.separation", 3.0)?,
            }),
            "cifar10" => DataSource::Cifar10 {
                dir: data_dir,
                subset: map.or("data.subset", 0)?,
            },
            "chars" => DataSource::Chars { path: data_dir },
            other => return Err(Error::config(format!("unknown data source {other:?}"))),
        };

        let steps: u64 = map.or("steps", 3000)?;
        if steps < 3 {
            return Err(Error::config("steps must be at least 3"));
        }
        let warmup: u64 = map.or("warmup", ((steps as f64 * 0.05).round() as u64).max(1))?;
        let peak_lr: f64 = map.or("lr", if decoder { 3e-4 } else { 1e-3 })?;
        let schedule = match map.get("schedule").unwrap_or("wsd") {
            "wsd" => {
                let decay_start = match map.parsed::<u64>("decay_start")? {
                    Some(t) => t,
                    None => {
                        let frac: f64 = map.or("cooldown", if decoder { 0.2 } else { 0.35 })?;
                        if !(frac > 0.0 && frac < 1.0) {
                            return Err(Error::config(format!("cooldown {frac} outside (0, 1)")));
                        }
                        steps - (frac * steps as f64).round() as u64
                    }
                };
                ScheduleSpec::wsd(warmup, decay_start, steps, peak_lr)
            }
            "cosine" => ScheduleSpec::warmup_cosine(warmup, steps, peak_lr),
            other => return Err(Error::config(format!("unknown schedule {other:?}"))),
        }
        .map_err(|e| Error::config(strip(e)))?;

        let adam = AdamWConfig {
            beta1: map.or("beta1", 0.9)?,
            beta2: map.or("beta2", 0.999)?,
            eps: map.or("eps", 1e-8)?,
            weight_decay: map.or("weight_decay", if decoder { 0.1 } else { 5e-4 })?,
        };
        adam.validate().map_err(|e| Error::config(strip(e)))?;

        let grad_clip: f64 = map.or("grad_clip", 0.0)?;
        if !(grad_clip >= 0.0 && grad_clip.is_finite()) {
            return Err(Error::config("grad_clip must be finite and >= 0"));
        }
        let checkpoint_every: u64 =
            map.or("checkpoint_every", ((steps as f64 * 0.02).round() as u64).max(1))?;
        let eval_every: u64 = map.or("eval_every", checkpoint_every)?;
        if checkpoint_every == 0 || eval_every == 0 {
            return Err(Error::config("checkpoint_every and eval_every must be positive"));
        }
        let batch_size: usize = map.or("batch_size", 128)?;
        if batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }

        Ok(RunConfig {
            model,
            init_seed: map.or("init_seed", seed)?,
            data,
            data_seed: map.or("data.seed", seed)?,
            heldout_size: map.or("heldout_size", 0)?,
            schedule,
            adam,
            grad_clip: (grad_clip > 0.0).then_some(grad_clip),
            batch_size,
            checkpoint_every,
            eval_every,
            probe_size: map.or("probe_size", 1024)?,
            seed,
        })
    }

    /// Resolved configuration in config-file syntax.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.model {
            ModelChoice::CifarCnn2 => put("model", "cifarcnn2".into()),
            ModelChoice::Mlp { hidden } => {
                put("model", "mlp".into());
                put("mlp.hidden", join(hidden));
            }
            ModelChoice::TinyDecoder(d) => {
                put("model", "tinydecoder".into());
                put("decoder.context", d.context.to_string());
                put("decoder.width", d.width.to_string());
                put("decoder.blocks", d.blocks.to_string());
                put("decoder.heads", d.heads.to_string());
            }
        }
        put("init_seed", self.init_seed.to_string());
        put("data", self.data.name().into());
        match &self.data {
            DataSource::Blobs(b) => {
                put("blobs.classes", b.classes.to_string());
                put("blobs.per_class", b.per_class.to_string());
                put("blobs.dim", b.dim.to_string());
                put("blobs.separation", b.separation.to_string());
            }
            DataSource::Cifar10 { dir, subset } => {
                if let Some(d) = dir {
                    put("data.dir", d.display().to_string());
                }
                put("data.subset", subset.to_string());
            }
            DataSource::Chars { path } => {
                if let Some(d) = path {
                    put("data.dir", d.display().to_string());
                }
            }
        }
        put("data.seed", self.data_seed.to_string());
        put("heldout_size", self.heldout_size.to_string());
        let s = &self.schedule;
        put("schedule", s.kind.name().into());
        put("steps", s.total.to_string());
        put("warmup", s.warmup.to_string());
        if s.kind == ScheduleKind::Wsd {
            put("decay_start", s.decay_start.to_string());
        }
        put("lr", s.peak_lr.to_string());
        put("beta1", self.adam.beta1.to_string());
        put("beta2", self.adam.beta2.to_string());
        put("eps", self.adam.eps.to_string());
        put("weight_decay", self.adam.weight_decay.to_string());
        put("grad_clip", self.grad_clip.unwrap_or(0.0).to_string());
        put("batch_size", self.batch_size.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("eval_every", self.eval_every.to_string());
        put("probe_size", self.probe_size.to_string());
        put("seed", self.seed.to_string());
        out
    }

    /// Same run under a different schedule.
    pub fn with_schedule(&self, schedule: ScheduleSpec) -> Self {
        Self {
            schedule,
            ..self.clone()
        }
    }

    /// Data directory, falling back to `fallback` (typically from the
    /// environment) when the config does not name one.
    pub fn with_data_dir_fallback(mut self, fallback: Option<PathBuf>) -> Self {
        match &mut self.data {
            DataSource::Cifar10 { dir, .. } if dir.is_none() => *dir = fallback,
            DataSource::Chars { path } if path.is_none() => *path = fallback,
            _ => {}
        }
        self
    }

    /// Model spec once the dataset's input and output sizes are known.
    pub fn model_spec(&self, train: &Dataset) -> ModelSpec {
        let kind = match &self.model {
            ModelChoice::CifarCnn2 => ModelKind::CifarCnn2,
            ModelChoice::Mlp { hidden } => {
                let mut layers = vec![train.example_len()];
                layers.extend(hidden);
                layers.push(train.num_classes());
                ModelKind::Mlp { layers }
            }
            ModelChoice::TinyDecoder(d) => ModelKind::TinyDecoder(DecoderSpec {
                vocab: train.num_classes(),
                ..d.clone()
            }),
        };
        ModelSpec {
            kind,
            init_seed: self.init_seed,
        }
    }

    /// Loads the training set, the probe batch and the optional held-out batch.
    pub fn load_data(&self) -> Result<RunData> {
        let (train, heldout) = match &self.data {
            DataSource::Blobs(spec) => {
                let train = spec.generate(self.data_seed)?;
                let heldout = if self.heldout_size > 0 {
                    let per_class = self.heldout_size.div_ceil(spec.classes);
                    Some(spec.generate_heldout(self.data_seed, per_class)?)
                } else {
                    None
                };
                (train, heldout)
            }
            DataSource::Cifar10 { dir, subset } => {
                let dir = dir.as_ref().ok_or_else(|| {
                    Error::DataMissing(PathBuf::from("<cifar10 directory not configured>"))
                })?;
                let full = load_cifar10(dir, Split::Train)?;
                let train = if *subset > 0 && *subset < full.len() {
                    full.subset(&seeded_subset(full.len(), *subset, self.data_seed, "subset"))
                } else {
                    full
                };
                let heldout = if self.heldout_size > 0 {
                    let test = load_cifar10(dir, Split::Test)?;
                    let n = self.heldout_size.min(test.len());
                    Some(test.subset(&seeded_subset(test.len(), n, self.data_seed, "heldout")))
                } else {
                    None
                };
                (train, heldout)
            }
            DataSource::Chars { path } => load_chars(path.as_deref(), self)?,
        };
        let probe = train.batch(&probe_indices(train.len(), self.probe_size, self.seed));
        Ok(RunData {
            heldout: heldout.map(|h| h.as_batch()),
            probe,
            train,
        })
    }
}

#[cfg(feature = "decoder")]
fn load_chars(path: Option<&Path>, config: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    let context = match &config.model {
        ModelChoice::TinyDecoder(d) => d.context,
        _ => DecoderSpec::default().context,
    };
    let path = path.ok_or_else(|| Error::DataMissing(PathBuf::from("<text corpus not configured>")))?;
    let corpus = crate::data::char_corpus(path, context)?;
    let heldout = (config.heldout_size > 0).then(|| corpus.heldout(config.heldout_size));
    Ok((corpus.train, heldout.transpose()?))
}

#[cfg(not(feature = "decoder"))]
fn load_chars(_path: Option<&Path>, _config: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    Err(Error::config(
        "the chars dataset requires building with the `decoder` feature",
    ))
}

/// Sorted `size` indices out of `0..n`, keyed by `seed` and `tag`.
fn seeded_subset(n: usize, size: usize, seed: u64, tag: &str) -> Vec<usize> {
    let mut rng = SeededRng::new(derive_seed(seed, tag));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..size.min(n)].to_vec();
    chosen.sort_unstable();
    chosen
}
