//! Feed-forward classifiers built from a small operator set: 2-D
//! convolution, ReLU, 2x2 max-pooling, global spatial mean, and affine
//! layers, followed by a softmax cross-entropy head.
//!
//! Each layer has a hand-written backward pass; the network records a tape
//! of activations on the forward sweep and replays it in reverse.
//!
//! Reduction order: examples are grouped into fixed chunks of
//! [`CHUNK`] consecutive examples. Within a chunk, per-example losses and
//! gradients are summed sequentially; chunk totals are then added to the
//! batch total in chunk order and scaled by `1/B` at the end. Chunks may be
//! evaluated on any number of threads without changing a single bit.

use rayon::prelude::*;

use super::layout::{InitRule, Layout};
use super::softmax_xent;
use crate::data::Batch;
use crate::error::{Error, Result};

pub(crate) const CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Shape {
    c: usize,
    h: usize,
    w: usize,
}

impl Shape {
    fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Conv {
        out_c: usize,
        k: usize,
        pad: usize,
        w: usize,
        b: usize,
    },
    Relu,
    MaxPool2,
    SpatialMean,
    Linear {
        inp: usize,
        out: usize,
        w: usize,
        b: usize,
    },
}

pub(crate) struct Network {
    layers: Vec<Layer>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the logits.
    shapes: Vec<Shape>,
    dim: usize,
}

struct Builder {
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    layout: Layout,
}

impl Builder {
    fn new(input: Shape) -> Self {
        Self {
            layers: Vec::new(),
            shapes: vec![input],
            layout: Layout::new(),
        }
    }

    fn current(&self) -> Shape {
        *self.shapes.last().expect("input shape")
    }

    fn conv(mut self, name: &str, out_c: usize, k: usize, pad: usize) -> Result<Self> {
        let s = self.current();
        if s.h + 2 * pad < k || s.w + 2 * pad < k || out_c == 0 {
            return Err(Error::invalid(format!("{name}: kernel {k} does not fit {s:?}")));
        }
        let w = self.layout.push(
            format!("{name}.weight"),
            vec![out_c, s.c, k, k],
            InitRule::Uniform { fan_in: s.c * k * k },
        )?;
        let b = self.layout.push(format!("{name}.bias"), vec![out_c], InitRule::Zero)?;
        self.layers.push(Layer::Conv { out_c, k, pad, w, b });
        self.shapes.push(Shape {
            c: out_c,
            h: s.h + 2 * pad - k + 1,
            w: s.w + 2 * pad - k + 1,
        });
        Ok(self)
    }

    fn relu(mut self) -> Self {
        let s = self.current();
        self.layers.push(Layer::Relu);
        self.shapes.push(s);
        self
    }

    fn pool(mut self) -> Result<Self> {
        let s = self.current();
        if s.h < 2 || s.w < 2 {
            return Err(Error::invalid(format!("cannot max-pool {s:?}")));
        }
        self.layers.push(Layer::MaxPool2);
        self.shapes.push(Shape {
            c: s.c,
            h: s.h / 2,
            w: s.w / 2,
        });
        Ok(self)
    }

    fn mean(mut self) -> Self {
        let s = self.current();
        self.layers.push(Layer::SpatialMean);
        self.shapes.push(Shape { c: s.c, h: 1, w: 1 });
        self
    }

    fn linear(mut self, name: &str, out: usize) -> Result<Self> {
        let inp = self.current().len();
        if out == 0 {
            return Err(Error::invalid(format!("{name}: zero-width layer")));
        }
        let w = self.layout.push(
            format!("{name}.weight"),
            vec![out, inp],
            InitRule::Uniform { fan_in: inp },
        )?;
        let b = self.layout.push(format!("{name}.bias"), vec![out], InitRule::Zero)?;
        self.layers.push(Layer::Linear { inp, out, w, b });
        self.shapes.push(Shape { c: out, h: 1, w: 1 });
        Ok(self)
    }

    fn finish(self) -> (Network, Layout) {
        let dim = self.layout.dim();
        (
            Network {
                layers: self.layers,
                shapes: self.shapes,
                dim,
            },
            self.layout,
        )
    }
}

impl Network {
    pub(crate) fn cifarcnn2() -> Result<(Self, Layout)> {
        let b = Builder::new(Shape { c: 3, h: 32, w: 32 })
            .conv("conv1", 32, 3, 1)?
            .relu()
            .pool()?
            .conv("conv2", 128, 3, 1)?
            .relu()
            .pool()?
            .conv("conv3", 128, 3, 1)?
            .relu()
            .pool()?
            .conv("conv4", 128, 3, 1)?
            .relu()
            .pool()?
            .mean()
            .linear("fc1", 10)?;
        Ok(b.finish())
    }

    pub(crate) fn mlp(widths: &[usize]) -> Result<(Self, Layout)> {
        if widths.len() < 2 {
            return Err(Error::invalid("mlp needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid(format!("mlp has a zero-width layer: {widths:?}")));
        }
        let mut b = Builder::new(Shape {
            c: widths[0],
            h: 1,
            w: 1,
        });
        let last = widths.len() - 1;
        for (i, &width) in widths[1..].iter().enumerate() {
            b = b.linear(&format!("fc{}", i + 1), width)?;
            if i + 1 < last {
                b = b.relu();
            }
        }
        Ok(b.finish())
    }

    pub(crate) fn input_shape(&self) -> Vec<usize> {
        let s = self.shapes[0];
        if s.h == 1 && s.w == 1 {
            vec![s.c]
        } else {
            vec![s.c, s.h, s.w]
        }
    }

    pub(crate) fn num_classes(&self) -> usize {
        self.shapes.last().expect("output shape").len()
    }

    /// Spatial shape entering the classifier; used by shape tests.
    #[cfg(test)]
    fn shape_before_mean(&self) -> Option<(usize, usize, usize)> {
        self.layers
            .iter()
            .position(|l| matches!(l, Layer::SpatialMean))
            .map(|i| (self.shapes[i].c, self.shapes[i].h, self.shapes[i].w))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.example_len() != self.shapes[0].len() {
            return Err(Error::shape(format!(
                "network expects examples of {} values, batch has {}",
                self.shapes[0].len(),
                batch.example_len()
            )));
        }
        if batch.targets_per_example() != 1 {
            return Err(Error::shape("classifier expects one label per example"));
        }
        let classes = self.num_classes();
        if let Some(&l) = batch.labels().iter().find(|&&l| l as usize >= classes) {
            return Err(Error::invalid(format!("label {l} outside [0, {classes})")));
        }
        Ok(())
    }

    pub(crate) fn forward_logits(&self, params: &[f64], batch: &Batch) -> Result<Vec<f64>> {
        if batch.example_len() != self.shapes[0].len() {
            return Err(Error::shape(format!(
                "network expects examples of {} values, batch has {}",
                self.shapes[0].len(),
                batch.example_len()
            )));
        }
        let classes = self.num_classes();
        let chunks: Vec<Vec<f64>> = chunk_ranges(batch.len())
            .into_par_iter()
            .map(|range| {
                let mut tape = Tape::new(self);
                let mut out = Vec::with_capacity(range.len() * classes);
                for i in range {
                    self.forward(params, batch.example(i), &mut tape);
                    out.extend_from_slice(tape.logits());
                }
                out
            })
            .collect();
        Ok(chunks.concat())
    }

    pub(crate) fn loss(&self, params: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let sums: Vec<f64> = chunk_ranges(batch.len())
            .into_par_iter()
            .map(|range| {
                let mut tape = Tape::new(self);
                let mut sum = 0.0;
                for i in range {
                    self.forward(params, batch.example(i), &mut tape);
                    sum += softmax_xent(tape.logits(), batch.labels()[i] as usize, None);
                }
                sum
            })
            .collect();
        let total = sums.into_iter().fold(0.0, |acc, s| acc + s);
        Ok(total / batch.len() as f64)
    }

    pub(crate) fn loss_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let ranges = chunk_ranges(batch.len());
        let window = 2 * rayon::current_num_threads().max(1);
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for group in ranges.chunks(window) {
            let parts: Vec<(f64, Vec<f64>)> = group
                .par_iter()
                .map(|range| {
                    let mut tape = Tape::new(self);
                    let mut g = vec![0.0; self.dim];
                    let mut sum = 0.0;
                    for i in range.clone() {
                        self.forward(params, batch.example(i), &mut tape);
                        let label = batch.labels()[i] as usize;
                        let n = self.layers.len();
                        let (logits, dlogits) = (&tape.acts[n], &mut tape.deltas[n]);
                        sum += softmax_xent(logits, label, Some(dlogits));
                        self.backward(params, &mut tape, &mut g);
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

    fn forward(&self, p: &[f64], x: &[f32], tape: &mut Tape) {
        for (a, &v) in tape.acts[0].iter_mut().zip(x) {
            *a = f64::from(v);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = tape.acts.split_at_mut(i + 1);
            let input = &before[i];
            let output = &mut after[0];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            match *layer {
                Layer::Conv { out_c, k, pad, w, b } => {
                    let col = &mut tape.cols[i];
                    im2col(input, si, so, k, pad, col);
                    let kk = si.c * k * k;
                    let ohw = so.hw();
                    gemm(
                        out_c, kk, ohw,
                        &p[w..w + out_c * kk], kk, 1,
                        col, ohw, 1,
                        0.0, output, ohw, 1,
                    );
                    for oc in 0..out_c {
                        let bias = p[b + oc];
                        for v in &mut output[oc * ohw..(oc + 1) * ohw] {
                            *v += bias;
                        }
                    }
                }
                Layer::Relu => {
                    for (o, &v) in output.iter_mut().zip(input) {
                        *o = if v > 0.0 { v } else { 0.0 };
                    }
                }
                Layer::MaxPool2 => {
                    let arg = &mut tape.argmax[i];
                    for c in 0..so.c {
                        for oy in 0..so.h {
                            for ox in 0..so.w {
                                let mut best = usize::MAX;
                                let mut best_v = f64::NEG_INFINITY;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let idx = c * si.hw() + (2 * oy + dy) * si.w + 2 * ox + dx;
                                        if best == usize::MAX || input[idx] > best_v {
                                            best = idx;
                                            best_v = input[idx];
                                        }
                                    }
                                }
                                let o = c * so.hw() + oy * so.w + ox;
                                output[o] = best_v;
                                arg[o] = best;
                            }
                        }
                    }
                }
                Layer::SpatialMean => {
                    let hw = si.hw();
                    for c in 0..si.c {
                        let s: f64 = input[c * hw..(c + 1) * hw].iter().sum();
                        output[c] = s / hw as f64;
                    }
                }
                Layer::Linear { inp, out, w, b } => {
                    for o in 0..out {
                        let row = &p[w + o * inp..w + (o + 1) * inp];
                        let dot: f64 = row.iter().zip(input.iter()).map(|(a, x)| a * x).sum();
                        output[o] = p[b + o] + dot;
                    }
                }
            }
        }
    }

    /// Reverse sweep. Expects `tape.deltas[last]` to hold dLoss/dlogits and
    /// adds this example's parameter gradient into `grad`.
    fn backward(&self, p: &[f64], tape: &mut Tape, grad: &mut [f64]) {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let need_dx = i > 0;
            let input = &tape.acts[i];
            let (lower, upper) = tape.deltas.split_at_mut(i + 1);
            let dx = &mut lower[i];
            let dy = &upper[0];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            match *layer {
                Layer::Conv { out_c, k, pad, w, b } => {
                    let kk = si.c * k * k;
                    let ohw = so.hw();
                    let col = &tape.cols[i];
                    // dW += dY · colᵀ
                    gemm(
                        out_c, ohw, kk,
                        dy, ohw, 1,
                        col, 1, ohw,
                        1.0, &mut grad[w..w + out_c * kk], kk, 1,
                    );
                    for oc in 0..out_c {
                        let s: f64 = dy[oc * ohw..(oc + 1) * ohw].iter().sum();
                        grad[b + oc] += s;
                    }
                    if need_dx {
                        let dcol = &mut tape.scratch;
                        dcol.resize(kk * ohw, 0.0);
                        // dcol = Wᵀ · dY
                        gemm(
                            kk, out_c, ohw,
                            &p[w..w + out_c * kk], 1, kk,
                            dy, ohw, 1,
                            0.0, dcol, ohw, 1,
                        );
                        col2im(dcol, si, so, k, pad, dx);
                    }
                }
                Layer::Relu => {
                    if need_dx {
                        for ((d, &g), &x) in dx.iter_mut().zip(dy.iter()).zip(input.iter()) {
                            *d = if x > 0.0 { g } else { 0.0 };
                        }
                    }
                }
                Layer::MaxPool2 => {
                    if need_dx {
                        dx.fill(0.0);
                        for (&src, &g) in tape.argmax[i].iter().zip(dy.iter()) {
                            dx[src] += g;
                        }
                    }
                }
                Layer::SpatialMean => {
                    if need_dx {
                        let hw = si.hw();
                        let inv = 1.0 / hw as f64;
                        for c in 0..si.c {
                            let g = dy[c] * inv;
                            dx[c * hw..(c + 1) * hw].fill(g);
                        }
                    }
                }
                Layer::Linear { inp, out, w, b } => {
                    for o in 0..out {
                        let g = dy[o];
                        grad[b + o] += g;
                        let row = &mut grad[w + o * inp..w + (o + 1) * inp];
                        for (r, &x) in row.iter_mut().zip(input.iter()) {
                            *r += g * x;
                        }
                    }
                    if need_dx {
                        dx.fill(0.0);
                        for o in 0..out {
                            let g = dy[o];
                            let row = &p[w + o * inp..w + (o + 1) * inp];
                            for (d, &wv) in dx.iter_mut().zip(row) {
                                *d += wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-chunk working memory, reused across the chunk's examples.
struct Tape {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    scratch: Vec<f64>,
}

impl Tape {
    fn new(net: &Network) -> Self {
        let acts: Vec<Vec<f64>> = net.shapes.iter().map(|s| vec![0.0; s.len()]).collect();
        let deltas = acts.clone();
        let mut cols = Vec::with_capacity(net.layers.len());
        let mut argmax = Vec::with_capacity(net.layers.len());
        for (i, layer) in net.layers.iter().enumerate() {
            let (si, so) = (net.shapes[i], net.shapes[i + 1]);
            cols.push(match layer {
                Layer::Conv { k, .. } => vec![0.0; si.c * k * k * so.hw()],
                _ => Vec::new(),
            });
            argmax.push(match layer {
                Layer::MaxPool2 => vec![0; so.len()],
                _ => Vec::new(),
            });
        }
        Self {
            acts,
            deltas,
            cols,
            argmax,
            scratch: Vec::new(),
        }
    }

    fn logits(&self) -> &[f64] {
        self.acts.last().expect("logits")
    }
}

pub(crate) fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect()
}

fn im2col(input: &[f64], si: Shape, so: Shape, k: usize, pad: usize, col: &mut [f64]) {
    let ohw = so.hw();
    for ci in 0..si.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * ohw..(row + 1) * ohw];
                for oy in 0..so.h {
                    let iy = (oy + ky) as isize - pad as isize;
                    let line = &mut dst[oy * so.w..(oy + 1) * so.w];
                    if iy < 0 || iy >= si.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let base = ci * si.hw() + iy as usize * si.w;
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox + kx) as isize - pad as isize;
                        *v = if ix < 0 || ix >= si.w as isize {
                            0.0
                        } else {
                            input[base + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], si: Shape, so: Shape, k: usize, pad: usize, dx: &mut [f64]) {
    dx.fill(0.0);
    let ohw = so.hw();
    for ci in 0..si.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * ohw..(row + 1) * ohw];
                for oy in 0..so.h {
                    let iy = (oy + ky) as isize - pad as isize;
                    if iy < 0 || iy >= si.h as isize {
                        continue;
                    }
                    let base = ci * si.hw() + iy as usize * si.w;
                    for ox in 0..so.w {
                        let ix = (ox + kx) as isize - pad as isize;
                        if ix >= 0 && ix < si.w as isize {
                            dx[base + ix as usize] += src[oy * so.w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `C = A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
#[rustfmt::skip]
pub(crate) fn gemm(
    m: usize, k: usize, n: usize,
    a: &[f64], rsa: usize, csa: usize,
    b: &[f64], rsb: usize, csb: usize,
    beta: f64, c: &mut [f64], rsc: usize, csc: usize,
) {
    let extent = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 }
    };
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    assert!(c.len() >= extent(m, n, rsc, csc));
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta, c.as_mut_ptr(), rsc as isize, csc as isize,
        );
    }
}
