//! Tiny decoder-only character model.
//!
//! Token plus learned position embeddings feed `blocks` pre-norm
//! transformer blocks (causal multi-head attention, then a ReLU MLP of
//! width `4 * width`, each wrapped in a residual), a final layer norm and
//! a linear head over the vocabulary. The loss is the mean next-token
//! cross-entropy over every position of every example.
//!
//! Per-example work is grouped and reduced exactly as in the feed-forward
//! networks, so results do not depend on the thread count.

use rayon::prelude::*;

use super::layout::{InitRule, Layout};
use super::network::{chunk_ranges, gemm};
use super::{softmax_xent, DecoderSpec};
use crate::data::Batch;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
}

#[derive(Clone, Copy, Debug)]
struct Block {
    ln1: Norm,
    qkv: Linear,
    proj: Linear,
    ln2: Norm,
    fc1: Linear,
    fc2: Linear,
}

pub(crate) struct Decoder {
    spec: DecoderSpec,
    tok: usize,
    pos: usize,
    blocks: Vec<Block>,
    ln_f: Norm,
    head: Linear,
    dim: usize,
}

fn norm(layout: &mut Layout, name: &str, width: usize) -> Result<Norm> {
    Ok(Norm {
        gain: layout.push(format!("{name}.gain"), vec![width], InitRule::One)?,
        bias: layout.push(format!("{name}.bias"), vec![width], InitRule::Zero)?,
    })
}

fn linear(layout: &mut Layout, name: &str, inp: usize, out: usize) -> Result<Linear> {
    Ok(Linear {
        inp,
        out,
        w: layout.push(format!("{name}.weight"), vec![out, inp], InitRule::Uniform { fan_in: inp })?,
        b: layout.push(format!("{name}.bias"), vec![out], InitRule::Zero)?,
    })
}

impl Decoder {
    pub(crate) fn new(spec: &DecoderSpec) -> Result<(Self, Layout)> {
        let d = spec.width;
        if spec.vocab == 0 || spec.context == 0 || d == 0 || spec.blocks == 0 || spec.heads == 0 {
            return Err(Error::invalid(format!("decoder sizes must be positive: {spec:?}")));
        }
        if d % spec.heads != 0 {
            return Err(Error::invalid(format!(
                "width {d} is not divisible by {} heads",
                spec.heads
            )));
        }
        let mut l = Layout::new();
        let tok = l.push("tok_emb", vec![spec.vocab, d], InitRule::Uniform { fan_in: d })?;
        let pos = l.push("pos_emb", vec![spec.context, d], InitRule::Uniform { fan_in: d })?;
        let mut blocks = Vec::with_capacity(spec.blocks);
        for i in 0..spec.blocks {
            let p = format!("block{i}");
            blocks.push(Block {
                ln1: norm(&mut l, &format!("{p}.ln1"), d)?,
                qkv: linear(&mut l, &format!("{p}.attn.qkv"), d, 3 * d)?,
                proj: linear(&mut l, &format!("{p}.attn.proj"), d, d)?,
                ln2: norm(&mut l, &format!("{p}.ln2"), d)?,
                fc1: linear(&mut l, &format!("{p}.mlp.fc1"), d, 4 * d)?,
                fc2: linear(&mut l, &format!("{p}.mlp.fc2"), 4 * d, d)?,
            });
        }
        let ln_f = norm(&mut l, "ln_f", d)?;
        let head = linear(&mut l, "head", d, spec.vocab)?;
        let dim = l.dim();
        Ok((
            Self {
                spec: spec.clone(),
                tok,
                pos,
                blocks,
                ln_f,
                head,
                dim,
            },
            l,
        ))
    }

    pub(crate) fn input_shape(&self) -> Vec<usize> {
        vec![self.spec.context]
    }

    pub(crate) fn num_classes(&self) -> usize {
        self.spec.vocab
    }

    fn check_batch(&self, batch: &Batch, with_targets: bool) -> Result<()> {
        let t = self.spec.context;
        if batch.example_len() != t {
            return Err(Error::shape(format!(
                "decoder expects {t} tokens per example, batch has {}",
                batch.example_len()
            )));
        }
        let v = self.spec.vocab;
        if let Some(&x) = batch
            .inputs()
            .iter()
            .find(|&&x| !(x >= 0.0 && (x as usize) < v && x.fract() == 0.0))
        {
            return Err(Error::invalid(format!("token {x} outside [0, {v})")));
        }
        if with_targets {
            if batch.targets_per_example() != t {
                return Err(Error::shape(format!(
                    "decoder expects {t} targets per example, batch has {}",
                    batch.targets_per_example()
                )));
            }
            if let Some(&l) = batch.labels().iter().find(|&&l| l as usize >= v) {
                return Err(Error::invalid(format!("target {l} outside [0, {v})")));
            }
        }
        Ok(())
    }

    pub(crate) fn forward_logits(&self, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        self.check_batch(batch, false)?;
        let chunks: Vec<Vec<f64>> = chunk_ranges(batch.len())
            .into_par_iter()
            .map(|range| {
                let mut out = Vec::new();
                for i in range {
                    let c = self.forward(params, batch.example(i));
                    out.extend_from_slice(&c.logits);
                }
                out
            })
            .collect();
        Ok(chunks.concat())
    }

    pub(crate) fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(batch, true)?;
        let sums: Vec<f64> = chunk_ranges(batch.len())
            .into_par_iter()
            .map(|range| {
                let mut sum = 0.0;
                for i in range {
                    let c = self.forward(params, batch.example(i));
                    sum += self.example_loss(&c, batch.targets(i), None);
                }
                sum
            })
            .collect();
        let total = sums.into_iter().fold(0.0, |acc, s| acc + s);
        Ok(total / batch.len() as f64)
    }

    pub(crate) fn loss_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch, true)?;
        let ranges = chunk_ranges(batch.len());
        let window = 2 * rayon::current_num_threads().max(1);
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for group in ranges.chunks(window) {
            let parts: Vec<(f64, Vec<f64>)> = group
                .par_iter()
                .map(|range| {
                    let mut g = vec![0.0; self.dim];
                    let mut sum = 0.0;
                    for i in range.clone() {
                        let c = self.forward(params, batch.example(i));
                        let mut dlogits = vec![0.0; c.logits.len()];
                        sum += self.example_loss(&c, batch.targets(i), Some(&mut dlogits));
                        self.backward(params, batch.example(i), &c, dlogits, &mut g);
                    }
                    (sum, g)
                })
                .collect();
            for (s, g) in parts {
                loss += s;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        Ok((loss * inv, grad))
    }

    /// Mean cross-entropy over positions; fills `dlogits` with its gradient.
    fn example_loss(&self, c: &Cache, targets: &[u32], mut dlogits: Option<&mut [f64]>) -> f64 {
        let v = self.spec.vocab;
        let t = self.spec.context;
        let mut sum = 0.0;
        for (p, &y) in targets.iter().enumerate() {
            let row = &c.logits[p * v..(p + 1) * v];
            let d = dlogits.as_deref_mut().map(|d| &mut d[p * v..(p + 1) * v]);
            sum += softmax_xent(row, y as usize, d);
        }
        if let Some(d) = dlogits {
            d.iter_mut().for_each(|x| *x /= t as f64);
        }
        sum / t as f64
    }

    fn forward(&self, p: &[f64], tokens: &[f32]) -> Cache {
        let (t, d) = (self.spec.context, self.spec.width);
        let mut x = vec![0.0; t * d];
        for (pos, &tok) in tokens.iter().enumerate() {
            let e = &p[self.tok + tok as usize * d..][..d];
            let q = &p[self.pos + pos * d..][..d];
            for ((xi, a), b) in x[pos * d..(pos + 1) * d].iter_mut().zip(e).zip(q) {
                *xi = a + b;
            }
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let ln1 = layer_norm(p, blk.ln1, &x, t, d);
            let qkv = affine(p, blk.qkv, &ln1.y, t);
            let (probs, att) = self.attention(&qkv);
            let y = affine(p, blk.proj, &att, t);
            let x_mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let ln2 = layer_norm(p, blk.ln2, &x_mid, t, d);
            let h = affine(p, blk.fc1, &ln2.y, t);
            let r: Vec<f64> = h.iter().map(|&v| v.max(0.0)).collect();
            let m = affine(p, blk.fc2, &r, t);
            x = x_mid.iter().zip(&m).map(|(a, b)| a + b).collect();
            blocks.push(BlockCache {
                ln1,
                qkv,
                probs,
                att,
                ln2,
                h,
                r,
            });
        }
        let ln_f = layer_norm(p, self.ln_f, &x, t, d);
        let logits = affine(p, self.head, &ln_f.y, t);
        Cache {
            blocks,
            ln_f,
            logits,
        }
    }

    /// Causal attention over a `t x 3d` row-major `[q | k | v]` matrix.
    /// Returns the per-head probabilities (`heads x t x t`, zero above the
    /// diagonal) and the concatenated head outputs (`t x d`).
    fn attention(&self, qkv: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (t, d, nh) = (self.spec.context, self.spec.width, self.spec.heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; nh * t * t];
        let mut out = vec![0.0; t * d];
        for h in 0..nh {
            let q = |i: usize| &qkv[i * 3 * d + h * dh..][..dh];
            let k = |j: usize| &qkv[i_k(j, d) + h * dh..][..dh];
            let v = |j: usize| &qkv[i_v(j, d) + h * dh..][..dh];
            for i in 0..t {
                let row = &mut probs[(h * t + i) * t..][..t];
                let mut max = f64::NEG_INFINITY;
                for (j, s) in row[..=i].iter_mut().enumerate() {
                    *s = dot(q(i), k(j)) * scale;
                    max = max.max(*s);
                }
                let mut z = 0.0;
                for s in &mut row[..=i] {
                    *s = (*s - max).exp();
                    z += *s;
                }
                let o = &mut out[i * d + h * dh..][..dh];
                for (j, s) in row[..=i].iter_mut().enumerate() {
                    *s /= z;
                    for (oc, vc) in o.iter_mut().zip(v(j)) {
                        *oc += *s * vc;
                    }
                }
            }
        }
        (probs, out)
    }

    fn backward(&self, p: &[f64], tokens: &[f32], c: &Cache, dlogits: Vec<f64>, g: &mut [f64]) {
        let (t, d) = (self.spec.context, self.spec.width);
        let dfin = affine_back(p, self.head, &c.ln_f.y, &dlogits, t, g);
        let mut dx = layer_norm_back(p, self.ln_f, &c.ln_f, &dfin, t, d, g);
        for (blk, bc) in self.blocks.iter().zip(&c.blocks).rev() {
            // x_out = x_mid + fc2(relu(fc1(ln2(x_mid))))
            let dr = affine_back(p, blk.fc2, &bc.r, &dx, t, g);
            let dh: Vec<f64> = dr
                .iter()
                .zip(&bc.h)
                .map(|(g, &h)| if h > 0.0 { *g } else { 0.0 })
                .collect();
            let dln2 = affine_back(p, blk.fc1, &bc.ln2.y, &dh, t, g);
            let dmid = layer_norm_back(p, blk.ln2, &bc.ln2, &dln2, t, d, g);
            dx.iter_mut().zip(&dmid).for_each(|(a, b)| *a += b);
            // x_mid = x_in + proj(attn(qkv(ln1(x_in))))
            let datt = affine_back(p, blk.proj, &bc.att, &dx, t, g);
            let dqkv = self.attention_back(&bc.qkv, &bc.probs, &datt);
            let dln1 = affine_back(p, blk.qkv, &bc.ln1.y, &dqkv, t, g);
            let din = layer_norm_back(p, blk.ln1, &bc.ln1, &dln1, t, d, g);
            dx.iter_mut().zip(&din).for_each(|(a, b)| *a += b);
        }
        for (pos, &tok) in tokens.iter().enumerate() {
            let row = &dx[pos * d..(pos + 1) * d];
            for (gi, v) in g[self.tok + tok as usize * d..][..d].iter_mut().zip(row) {
                *gi += v;
            }
            for (gi, v) in g[self.pos + pos * d..][..d].iter_mut().zip(row) {
                *gi += v;
            }
        }
    }

    fn attention_back(&self, qkv: &[f64], probs: &[f64], dout: &[f64]) -> Vec<f64> {
        let (t, d, nh) = (self.spec.context, self.spec.width, self.spec.heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dqkv = vec![0.0; t * 3 * d];
        let mut dp = vec![0.0; t];
        for h in 0..nh {
            for i in 0..t {
                let row = &probs[(h * t + i) * t..][..t];
                let go = &dout[i * d + h * dh..][..dh];
                // dP_ij = dO_i · v_j, dV_j += P_ij dO_i
                for j in 0..=i {
                    dp[j] = dot(go, &qkv[i_v(j, d) + h * dh..][..dh]);
                    let dv = &mut dqkv[i_v(j, d) + h * dh..][..dh];
                    for (a, b) in dv.iter_mut().zip(go) {
                        *a += row[j] * b;
                    }
                }
                let mean: f64 = (0..=i).map(|j| row[j] * dp[j]).sum();
                for j in 0..=i {
                    let ds = row[j] * (dp[j] - mean) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        let (qi, kj) = (i * 3 * d + h * dh + c, i_k(j, d) + h * dh + c);
                        dqkv[qi] += ds * qkv[kj];
                        dqkv[kj] += ds * qkv[qi];
                    }
                }
            }
        }
        dqkv
    }
}

fn i_k(j: usize, d: usize) -> usize {
    j * 3 * d + d
}

fn i_v(j: usize, d: usize) -> usize {
    j * 3 * d + 2 * d
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct NormCache {
    /// Normalized input before gain and bias.
    xhat: Vec<f64>,
    rstd: Vec<f64>,
    y: Vec<f64>,
}

struct BlockCache {
    ln1: NormCache,
    qkv: Vec<f64>,
    probs: Vec<f64>,
    att: Vec<f64>,
    ln2: NormCache,
    h: Vec<f64>,
    r: Vec<f64>,
}

struct Cache {
    blocks: Vec<BlockCache>,
    ln_f: NormCache,
    logits: Vec<f64>,
}

fn layer_norm(p: &[f64], n: Norm, x: &[f64], t: usize, d: usize) -> NormCache {
    let mut xhat = vec![0.0; t * d];
    let mut y = vec![0.0; t * d];
    let mut rstd = vec![0.0; t];
    let gain = &p[n.gain..n.gain + d];
    let bias = &p[n.bias..n.bias + d];
    for r in 0..t {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for c in 0..d {
            let h = (row[c] - mean) * s;
            xhat[r * d + c] = h;
            y[r * d + c] = gain[c] * h + bias[c];
        }
    }
    NormCache { xhat, rstd, y }
}

fn layer_norm_back(p: &[f64], n: Norm, c: &NormCache, dy: &[f64], t: usize, d: usize, g: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; t * d];
    for r in 0..t {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &c.xhat[r * d..(r + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            g[n.gain + j] += dyr[j] * xh[j];
            g[n.bias + j] += dyr[j];
            let dxh = dyr[j] * p[n.gain + j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        for j in 0..d {
            let dxh = dyr[j] * p[n.gain + j];
            dx[r * d + j] = c.rstd[r] * (dxh - m1 - xh[j] * m2);
        }
    }
    dx
}

/// `Y = X Wᵀ + b` for `t` rows.
#[rustfmt::skip]
fn affine(p: &[f64], l: Linear, x: &[f64], t: usize) -> Vec<f64> {
    let mut y = vec![0.0; t * l.out];
    gemm(
        t, l.inp, l.out,
        x, l.inp, 1,
        &p[l.w..l.w + l.out * l.inp], 1, l.inp,
        0.0, &mut y, l.out, 1,
    );
    for row in y.chunks_mut(l.out) {
        for (v, b) in row.iter_mut().zip(&p[l.b..l.b + l.out]) {
            *v += b;
        }
    }
    y
}

/// Accumulates `dW += dYᵀ X`, `db += Σ dY` and returns `dX = dY W`.
#[rustfmt::skip]
fn affine_back(p: &[f64], l: Linear, x: &[f64], dy: &[f64], t: usize, g: &mut [f64]) -> Vec<f64> {
    gemm(
        l.out, t, l.inp,
        dy, 1, l.out,
        x, l.inp, 1,
        1.0, &mut g[l.w..l.w + l.out * l.inp], l.inp, 1,
    );
    for row in dy.chunks(l.out) {
        for (gb, v) in g[l.b..l.b + l.out].iter_mut().zip(row) {
            *gb += v;
        }
    }
    let mut dx = vec![0.0; t * l.inp];
    gemm(
        t, l.out, l.inp,
        dy, l.out, 1,
        &p[l.w..l.w + l.out * l.inp], l.inp, 1,
        0.0, &mut dx, l.inp, 1,
    );
    dx
}
