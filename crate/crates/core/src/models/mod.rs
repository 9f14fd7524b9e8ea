//! Model zoo and the gradient-evaluation contract.
//!
//! A [`Differentiable`] maps `(params, batch)` to the mean per-example loss
//! and its exact reverse-mode gradient. Parameters are passed as `f64` so
//! that finite-difference probes (gradient checks, Hessian-vector products)
//! can perturb them below storage precision; all arithmetic inside the zoo
//! runs in double precision.

#[cfg(feature = "decoder")]
mod decoder;
mod layout;
mod network;
pub mod toy;

use sha2::{Digest, Sha256};

pub use layout::{InitRule, Layout, ParamBlock};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, SeededRng};
use crate::math::ParamVector;
use network::Network;

/// Anything the trainer and the diagnostics can differentiate.
pub trait Differentiable: Send + Sync {
    /// Number of parameters `d`.
    fn dim(&self) -> usize;

    /// Mean per-example loss over `batch`.
    fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64>;

    /// Mean loss and its gradient.
    fn loss_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)>;
}

/// Evaluates loss and gradient at a stored parameter vector.
pub fn grad(
    model: &dyn Differentiable,
    params: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    let (loss, g) = grad_f64(model, &params.to_f64(), batch)?;
    Ok((loss, ParamVector::from_f64(&g)))
}

/// [`grad`] on double-precision parameters, returning a double gradient.
pub fn grad_f64(
    model: &dyn Differentiable,
    params: &[f64],
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(model, params, batch)?;
    let (loss, g) = model.loss_grad(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            value: loss,
            step: None,
        });
    }
    Ok((loss, g))
}

/// Loss only, with the same checks as [`grad_f64`].
pub fn loss_f64(model: &dyn Differentiable, params: &[f64], batch: &Batch) -> Result<f64> {
    check_inputs(model, params, batch)?;
    let loss = model.loss(params, batch)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            value: loss,
            step: None,
        });
    }
    Ok(loss)
}

fn check_inputs(model: &dyn Differentiable, params: &[f64], batch: &Batch) -> Result<()> {
    if params.len() != model.dim() {
        return Err(Error::shape(format!(
            "model has {} parameters, got {}",
            model.dim(),
            params.len()
        )));
    }
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Shape of the optional character-level decoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecoderSpec {
    pub vocab: usize,
    pub context: usize,
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        Self {
            vocab: 96,
            context: 64,
            width: 128,
            blocks: 2,
            heads: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Four 3x3 conv blocks (32, 128, 128, 128 channels) with max-pooling,
    /// global spatial mean, and a 128 -> 10 classifier.
    CifarCnn2,
    /// Fully connected ReLU network; `layers` lists every width including
    /// input and output.
    Mlp { layers: Vec<usize> },
    TinyDecoder(DecoderSpec),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn cifarcnn2(init_seed: u64) -> Self {
        Self {
            kind: ModelKind::CifarCnn2,
            init_seed,
        }
    }

    pub fn mlp(layers: Vec<usize>, init_seed: u64) -> Self {
        Self {
            kind: ModelKind::Mlp { layers },
            init_seed,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::CifarCnn2 => "cifarcnn2",
            ModelKind::Mlp { .. } => "mlp",
            ModelKind::TinyDecoder(_) => "tinydecoder",
        }
    }

    /// Stable text form used for digests and checkpoint headers.
    pub fn canonical(&self) -> String {
        let body = match &self.kind {
            ModelKind::CifarCnn2 => "kind=cifarcnn2".to_string(),
            ModelKind::Mlp { layers } => format!("kind=mlp;layers={}", join(layers)),
            ModelKind::TinyDecoder(d) => format!(
                "kind=tinydecoder;vocab={};context={};width={};blocks={};heads={}",
                d.vocab, d.context, d.width, d.blocks, d.heads
            ),
        };
        format!("{body};init_seed={}", self.init_seed)
    }

    pub fn parse_canonical(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut layers = None;
        let mut init_seed = None;
        let mut dec = DecoderSpec::default();
        for field in text.split(';') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad model spec field {field:?}")))?;
            let num = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::invalid(format!("bad number {v:?} in model spec")))
            };
            match k {
                "kind" => kind = Some(v.to_string()),
                "layers" => layers = Some(parse_list(v)?),
                "init_seed" => {
                    init_seed = Some(
                        v.parse()
                            .map_err(|_| Error::invalid(format!("bad init_seed {v:?}")))?,
                    )
                }
                "vocab" => dec.vocab = num(v)?,
                "context" => dec.context = num(v)?,
                "width" => dec.width = num(v)?,
                "blocks" => dec.blocks = num(v)?,
                "heads" => dec.heads = num(v)?,
                _ => return Err(Error::invalid(format!("unknown model spec field {k:?}"))),
            }
        }
        let init_seed = init_seed.ok_or_else(|| Error::invalid("model spec lacks init_seed"))?;
        let kind = match kind.as_deref() {
            Some("cifarcnn2") => ModelKind::CifarCnn2,
            Some("mlp") => ModelKind::Mlp {
                layers: layers.ok_or_else(|| Error::invalid("mlp spec lacks layers"))?,
            },
            Some("tinydecoder") => ModelKind::TinyDecoder(dec),
            other => return Err(Error::invalid(format!("unknown model kind {other:?}"))),
        };
        Ok(Self { kind, init_seed })
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(self.canonical().as_bytes()));
        out
    }
}

pub(crate) fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad integer {s:?} in list {text:?}")))
        })
        .collect()
}

enum Arch {
    Network(Network),
    #[cfg(feature = "decoder")]
    Decoder(decoder::Decoder),
}

/// A built zoo model: its spec, parameter layout, and forward function.
pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    arch: Arch,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("dim", &self.layout.dim())
            .finish()
    }
}

pub fn build_model(spec: &ModelSpec) -> Result<Model> {
    let (layout, arch) = match &spec.kind {
        ModelKind::CifarCnn2 => {
            let (net, layout) = Network::cifarcnn2()?;
            (layout, Arch::Network(net))
        }
        ModelKind::Mlp { layers } => {
            let (net, layout) = Network::mlp(layers)?;
            (layout, Arch::Network(net))
        }
        #[cfg(feature = "decoder")]
        ModelKind::TinyDecoder(d) => {
            let (dec, layout) = decoder::Decoder::new(d)?;
            (layout, Arch::Decoder(dec))
        }
        #[cfg(not(feature = "decoder"))]
        ModelKind::TinyDecoder(_) => {
            return Err(Error::invalid(
                "tinydecoder requires building with the `decoder` feature",
            ))
        }
    };
    Ok(Model {
        spec: spec.clone(),
        layout,
        arch,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Shape of one input example.
    pub fn input_shape(&self) -> Vec<usize> {
        match &self.arch {
            Arch::Network(n) => n.input_shape(),
            #[cfg(feature = "decoder")]
            Arch::Decoder(d) => d.input_shape(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.arch {
            Arch::Network(n) => n.num_classes(),
            #[cfg(feature = "decoder")]
            Arch::Decoder(d) => d.num_classes(),
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = SeededRng::new(derive_seed(seed, "init"));
        let mut values = vec![0.0f32; self.dim()];
        for block in self.layout.blocks() {
            let slot = &mut values[block.offset..block.offset + block.len()];
            match block.init {
                InitRule::Zero => slot.fill(0.0),
                InitRule::One => slot.fill(1.0),
                InitRule::Uniform { fan_in } => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for w in slot {
                        *w = uniform_f32(&mut rng, bound);
                    }
                }
            }
        }
        ParamVector::new(values)
    }

    /// Raw logits, one row of `num_classes` per target position.
    pub fn forward_logits(&self, params: &ParamVector, batch: &Batch) -> Result<Vec<f64>> {
        let p = params.to_f64();
        if p.len() != self.dim() {
            return Err(Error::shape(format!(
                "model has {} parameters, got {}",
                self.dim(),
                p.len()
            )));
        }
        match &self.arch {
            Arch::Network(n) => n.forward_logits(&p, batch),
            #[cfg(feature = "decoder")]
            Arch::Decoder(d) => d.forward_logits(&p, batch),
        }
    }
}

fn uniform_f32(rng: &mut SeededRng, bound: f64) -> f32 {
    use rand::Rng;
    let u: f64 = rng.random();
    let w = ((2.0 * u - 1.0) * bound) as f32;
    // rounding to f32 may step just past the bound
    if f64::from(w) > bound {
        w.next_down()
    } else if f64::from(w) < -bound {
        w.next_up()
    } else {
        w
    }
}

impl Differentiable for Model {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        check_inputs(self, params, batch)?;
        match &self.arch {
            Arch::Network(n) => n.loss(params, batch),
            #[cfg(feature = "decoder")]
            Arch::Decoder(d) => d.loss(params, batch),
        }
    }

    fn loss_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        check_inputs(self, params, batch)?;
        match &self.arch {
            Arch::Network(n) => n.loss_grad(params, batch),
            #[cfg(feature = "decoder")]
            Arch::Decoder(d) => d.loss_grad(params, batch),
        }
    }
}

/// Stable softmax cross-entropy; writes `softmax - onehot` into `dlogits`
/// (if given) and returns the loss.
pub(crate) fn softmax_xent(logits: &[f64], label: usize, dlogits: Option<&mut [f64]>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    if let Some(d) = dlogits {
        for (di, &z) in d.iter_mut().zip(logits) {
            *di = (z - lse).exp();
        }
        d[label] -= 1.0;
    }
    lse - logits[label]
}
