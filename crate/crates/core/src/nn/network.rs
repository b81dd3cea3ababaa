use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kernels::{axpy, col2im, dot, im2col, ConvGeometry};
use super::real::Real;
use super::spec::{LayerPlan, LayerSpec, NetworkSpec, Shape};
use crate::error::{Error, Result};
use crate::render::RgbImage;
use crate::rng;

pub const FORMAT_VERSION: u32 = 1;

/// A named parameter array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub layer: String,
    pub weight: ParamArray<T>,
    pub bias: ParamArray<T>,
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    /// Class names in label-index order, when known.
    #[serde(default)]
    pub labels: Vec<String>,
    /// Free-form provenance written by the experiment layer.
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub spec: NetworkSpec,
    pub params: Vec<LayerParams<T>>,
    pub format_version: u32,
    pub train_meta: TrainMeta,
}

/// Xavier/Glorot uniform bound.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_layer<T: Real>(plan: &LayerPlan, seed: u64) -> LayerParams<T> {
    let index = plan.param_index.expect("parametric layer");
    let shape = plan.weight_shape();
    let count: usize = shape.iter().product();
    let a = xavier_bound(plan.fan_in, plan.fan_out);
    let mut r = rng::child(seed, index as u64);
    let data = (0..count)
        .map(|_| T::from_f64_lossy(a * (2.0 * rng::open01(&mut r) - 1.0)))
        .collect();
    LayerParams {
        layer: plan.name.clone(),
        weight: ParamArray {
            name: format!("{}.weight", plan.name),
            shape,
            data,
        },
        bias: ParamArray {
            name: format!("{}.bias", plan.name),
            shape: vec![plan.bias_len()],
            data: vec![T::zero(); plan.bias_len()],
        },
    }
}

/// Fresh parameters: Xavier-uniform weights, zero biases.
///
/// Parametric layer `p` (0-based, in layer order) draws from
/// `rng::child(seed, p)`, a ChaCha8 stream; weights are filled row-major as
/// `a * (2u - 1)` with `u` from [`rng::open01`].
pub fn init_network<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<Checkpoint<T>> {
    let plan = spec.plan()?;
    let params = plan
        .iter()
        .filter(|p| p.param_index.is_some())
        .map(|p| init_layer(p, seed))
        .collect();
    Ok(Checkpoint {
        spec: spec.clone(),
        params,
        format_version: FORMAT_VERSION,
        train_meta: TrainMeta {
            seed,
            ..Default::default()
        },
    })
}

/// Copies the feature extractor of `base` and re-initializes every dense
/// layer for `new_class_count` outputs.
pub fn transfer_head<T: Real>(base: &Checkpoint<T>, new_class_count: usize, seed: u64) -> Result<Checkpoint<T>> {
    if new_class_count < 2 {
        return Err(Error::InvalidParameter(format!(
            "a classifier head needs at least 2 classes, got {new_class_count}"
        )));
    }
    base.validate()?;
    let mut spec = base.spec.clone();
    let last_dense = spec
        .layers
        .iter()
        .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
        .expect("validated spec ends in dense + softmax");
    spec.layers[last_dense] = LayerSpec::Dense { units: new_class_count };
    spec.class_count = new_class_count;
    let plan = spec.plan()?;

    let mut params = Vec::with_capacity(base.params.len());
    for p in plan.iter().filter(|p| p.param_index.is_some()) {
        match p.spec {
            LayerSpec::Dense { .. } => params.push(init_layer(p, seed)),
            _ => params.push(base.params[p.param_index.unwrap()].clone()),
        }
    }
    Ok(Checkpoint {
        spec,
        params,
        format_version: FORMAT_VERSION,
        train_meta: TrainMeta {
            seed,
            ..Default::default()
        },
    })
}

impl<T: Real> Checkpoint<T> {
    /// Checks every parameter array against the shapes implied by the spec.
    pub fn validate(&self) -> Result<Vec<LayerPlan>> {
        let plan = self.spec.plan()?;
        let parametric: Vec<&LayerPlan> = plan.iter().filter(|p| p.param_index.is_some()).collect();
        if parametric.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameter pairs", parametric.len()),
                actual: format!("{}", self.params.len()),
            });
        }
        for (p, lp) in parametric.iter().zip(&self.params) {
            let ws = p.weight_shape();
            let ok = lp.layer == p.name
                && lp.weight.shape == ws
                && lp.weight.data.len() == ws.iter().product::<usize>()
                && lp.bias.shape == [p.bias_len()]
                && lp.bias.data.len() == p.bias_len();
            if !ok {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} with weight {:?}, bias [{}]", p.name, ws, p.bias_len()),
                    actual: format!("{} with weight {:?}, bias {:?}", lp.layer, lp.weight.shape, lp.bias.shape),
                });
            }
        }
        Ok(plan)
    }

    pub fn layer_params(&self, name: &str) -> Option<&LayerParams<T>> {
        self.params.iter().find(|p| p.layer == name)
    }

    /// Same network at another precision.
    pub fn convert<U: Real>(&self) -> Checkpoint<U> {
        let cast = |a: &ParamArray<T>| ParamArray {
            name: a.name.clone(),
            shape: a.shape.clone(),
            data: a.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
        };
        Checkpoint {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| LayerParams {
                    layer: p.layer.clone(),
                    weight: cast(&p.weight),
                    bias: cast(&p.bias),
                })
                .collect(),
            format_version: self.format_version,
            train_meta: self.train_meta.clone(),
        }
    }
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Default)]
pub struct Trace<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<T>>,
    /// Flat input index selected by each pooling output.
    pool_argmax: Vec<Vec<u32>>,
    cols: Vec<T>,
}

impl<T: Real> Trace<T> {
    pub fn new() -> Self {
        Self {
            acts: Vec::new(),
            pool_argmax: Vec::new(),
            cols: Vec::new(),
        }
    }

    pub fn probabilities(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pre-softmax outputs.
    pub fn logits(&self) -> &[T] {
        &self.acts[self.acts.len() - 2]
    }
}

fn geometry(plan: &LayerPlan) -> ConvGeometry {
    match (plan.spec, plan.input) {
        (LayerSpec::Conv { kernel, .. }, Shape::Volume { channels, height, width }) => ConvGeometry {
            channels,
            height,
            width,
            kernel,
        },
        _ => unreachable!("conv layer with a volume input"),
    }
}

/// Runs one sample through the network, recording every activation.
pub fn forward_trace<T: Real>(ckpt: &Checkpoint<T>, plan: &[LayerPlan], input: &[T], trace: &mut Trace<T>) -> Result<()> {
    if input.len() != ckpt.spec.input_len() {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "{}x{}x{} input ({} values)",
                ckpt.spec.input.height,
                ckpt.spec.input.width,
                ckpt.spec.input.channels,
                ckpt.spec.input_len()
            ),
            actual: format!("{} values", input.len()),
        });
    }
    trace.acts.resize_with(plan.len() + 1, Vec::new);
    trace.pool_argmax.resize_with(plan.len(), Vec::new);
    trace.acts[0].clear();
    trace.acts[0].extend_from_slice(input);

    for (i, layer) in plan.iter().enumerate() {
        let (before, after) = trace.acts.split_at_mut(i + 1);
        let x = &before[i];
        let y = &mut after[0];
        y.clear();
        y.resize(layer.output.len(), T::zero());
        match layer.spec {
            LayerSpec::Conv { filters, .. } => {
                let g = geometry(layer);
                let p = &ckpt.params[layer.param_index.unwrap()];
                im2col(x, g, &mut trace.cols);
                let (rows, plane) = (g.rows(), g.plane());
                for f in 0..filters {
                    let out = &mut y[f * plane..(f + 1) * plane];
                    out.fill(p.bias.data[f]);
                    let w = &p.weight.data[f * rows..(f + 1) * rows];
                    for (r, &wv) in w.iter().enumerate() {
                        axpy(out, wv, &trace.cols[r * plane..(r + 1) * plane]);
                    }
                }
            }
            LayerSpec::Relu => {
                for (o, &v) in y.iter_mut().zip(x.iter()) {
                    *o = if v > T::zero() { v } else { T::zero() };
                }
            }
            LayerSpec::MaxPool => {
                let (c, h, w) = match layer.input {
                    Shape::Volume { channels, height, width } => (channels, height, width),
                    Shape::Flat(_) => unreachable!(),
                };
                let (oh, ow) = (h / 2, w / 2);
                let idx = &mut trace.pool_argmax[i];
                idx.clear();
                idx.resize(y.len(), 0);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let base = ch * h * w + 2 * oy * w + 2 * ox;
                            let mut best = base;
                            for cand in [base + 1, base + w, base + w + 1] {
                                if x[cand] > x[best] {
                                    best = cand;
                                }
                            }
                            let o = ch * oh * ow + oy * ow + ox;
                            y[o] = x[best];
                            idx[o] = best as u32;
                        }
                    }
                }
            }
            LayerSpec::Flatten => y.copy_from_slice(x),
            LayerSpec::Dense { units } => {
                let p = &ckpt.params[layer.param_index.unwrap()];
                let n = x.len();
                for u in 0..units {
                    y[u] = p.bias.data[u] + dot(&p.weight.data[u * n..(u + 1) * n], x);
                }
            }
            LayerSpec::Softmax => {
                let m = x.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (o, &v) in y.iter_mut().zip(x.iter()) {
                    *o = (v - m).exp();
                    sum += *o;
                }
                for o in y.iter_mut() {
                    *o = *o / sum;
                }
            }
        }
    }
    Ok(())
}

/// Cross-entropy of the traced sample against `label`, computed from the
/// logits as `logsumexp(z) - z[label]`.
pub fn cross_entropy<T: Real>(trace: &Trace<T>, label: usize) -> T {
    let z = trace.logits();
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    lse - z[label]
}

/// Parameter gradients accumulated over a batch, one entry per parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(ckpt: &Checkpoint<T>) -> Self {
        Self {
            weight: ckpt.params.iter().map(|p| vec![T::zero(); p.weight.data.len()]).collect(),
            bias: ckpt.params.iter().map(|p| vec![T::zero(); p.bias.data.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.fill(T::zero()));
    }

    pub fn scale(&mut self, s: T) {
        self.weight
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|g| g.iter_mut().for_each(|v| *v *= s));
    }
}

/// Scratch buffers for [`backward`].
#[derive(Debug, Default)]
pub struct BackwardScratch<T> {
    grad_out: Vec<T>,
    grad_in: Vec<T>,
    dcols: Vec<T>,
    cols: Vec<T>,
}

impl<T: Real> BackwardScratch<T> {
    pub fn new() -> Self {
        Self {
            grad_out: Vec::new(),
            grad_in: Vec::new(),
            dcols: Vec::new(),
            cols: Vec::new(),
        }
    }
}

/// Backpropagates cross-entropy for the traced sample, adding parameter
/// gradients into `grads` for layers where `trainable[param_index]` is set.
/// Propagation stops below the lowest trainable layer.
pub fn backward<T: Real>(
    ckpt: &Checkpoint<T>,
    plan: &[LayerPlan],
    trace: &Trace<T>,
    label: usize,
    trainable: &[bool],
    grads: &mut Gradients<T>,
    scratch: &mut BackwardScratch<T>,
) {
    let lowest = plan
        .iter()
        .position(|p| p.param_index.is_some_and(|i| trainable[i]))
        .unwrap_or(plan.len());

    // softmax + cross-entropy: dL/dz = p - onehot
    let probs = trace.probabilities();
    scratch.grad_out.clear();
    scratch.grad_out.extend_from_slice(probs);
    scratch.grad_out[label] -= T::one();

    let last = plan.len() - 1;
    for i in (lowest..last).rev() {
        let layer = &plan[i];
        let x = &trace.acts[i];
        let need_input_grad = i > lowest;
        let d_out = &scratch.grad_out;
        let d_in = &mut scratch.grad_in;
        if need_input_grad {
            d_in.clear();
            d_in.resize(layer.input.len(), T::zero());
        }
        match layer.spec {
            LayerSpec::Dense { units } => {
                let pi = layer.param_index.unwrap();
                let p = &ckpt.params[pi];
                let n = x.len();
                if trainable[pi] {
                    let gw = &mut grads.weight[pi];
                    for u in 0..units {
                        axpy(&mut gw[u * n..(u + 1) * n], d_out[u], x);
                    }
                    for (gb, &d) in grads.bias[pi].iter_mut().zip(d_out.iter()) {
                        *gb += d;
                    }
                }
                if need_input_grad {
                    for u in 0..units {
                        axpy(d_in, d_out[u], &p.weight.data[u * n..(u + 1) * n]);
                    }
                }
            }
            LayerSpec::Conv { filters, .. } => {
                let pi = layer.param_index.unwrap();
                let p = &ckpt.params[pi];
                let g = geometry(layer);
                let (rows, plane) = (g.rows(), g.plane());
                if trainable[pi] {
                    im2col(x, g, &mut scratch.cols);
                    let gw = &mut grads.weight[pi];
                    for f in 0..filters {
                        let df = &d_out[f * plane..(f + 1) * plane];
                        grads.bias[pi][f] += df.iter().copied().sum::<T>();
                        for r in 0..rows {
                            gw[f * rows + r] += dot(df, &scratch.cols[r * plane..(r + 1) * plane]);
                        }
                    }
                }
                if need_input_grad {
                    scratch.dcols.clear();
                    scratch.dcols.resize(rows * plane, T::zero());
                    for f in 0..filters {
                        let df = &d_out[f * plane..(f + 1) * plane];
                        for r in 0..rows {
                            axpy(&mut scratch.dcols[r * plane..(r + 1) * plane], p.weight.data[f * rows + r], df);
                        }
                    }
                    col2im(&scratch.dcols, g, d_in);
                }
            }
            LayerSpec::Relu => {
                if need_input_grad {
                    let y = &trace.acts[i + 1];
                    for ((di, &d), &yv) in d_in.iter_mut().zip(d_out.iter()).zip(y.iter()) {
                        *di = if yv > T::zero() { d } else { T::zero() };
                    }
                }
            }
            LayerSpec::MaxPool => {
                if need_input_grad {
                    for (&src, &d) in trace.pool_argmax[i].iter().zip(d_out.iter()) {
                        d_in[src as usize] += d;
                    }
                }
            }
            LayerSpec::Flatten => {
                if need_input_grad {
                    d_in.copy_from_slice(d_out);
                }
            }
            LayerSpec::Softmax => unreachable!("softmax is only the final layer"),
        }
        if need_input_grad {
            std::mem::swap(&mut scratch.grad_out, &mut scratch.grad_in);
        }
    }
}

/// Class probabilities for each input, one row per input.
pub fn forward<T: Real>(ckpt: &Checkpoint<T>, batch: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let plan = ckpt.validate()?;
    let mut trace = Trace::new();
    batch
        .iter()
        .map(|x| {
            forward_trace(ckpt, &plan, x, &mut trace)?;
            Ok(trace.probabilities().to_vec())
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Most probable class and its probability.
pub fn predict<T: Real>(ckpt: &Checkpoint<T>, input: &[T]) -> Result<(usize, T)> {
    let probs = forward(ckpt, std::slice::from_ref(&input.to_vec()))?.remove(0);
    let label = argmax(&probs);
    Ok((label, probs[label]))
}

/// Reusable single-sample predictor that validates the checkpoint once.
pub struct Predictor<'a, T> {
    ckpt: &'a Checkpoint<T>,
    plan: Vec<LayerPlan>,
    trace: Trace<T>,
}

impl<'a, T: Real> Predictor<'a, T> {
    pub fn new(ckpt: &'a Checkpoint<T>) -> Result<Self> {
        Ok(Self {
            plan: ckpt.validate()?,
            ckpt,
            trace: Trace::new(),
        })
    }

    pub fn probabilities(&mut self, input: &[T]) -> Result<&[T]> {
        forward_trace(self.ckpt, &self.plan, input, &mut self.trace)?;
        Ok(self.trace.probabilities())
    }

    pub fn predict(&mut self, input: &[T]) -> Result<(usize, T)> {
        let probs = self.probabilities(input)?;
        let label = argmax(probs);
        Ok((label, probs[label]))
    }
}

/// Channel-first network input from an RGB image, bytes scaled to [0, 1].
pub fn image_to_input<T: Real>(img: &RgbImage) -> Vec<T> {
    let plane = img.width * img.height;
    let mut out = vec![T::zero(); plane * 3];
    let scale = T::from_f64_lossy(1.0 / 255.0);
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = T::from_f64_lossy(px[c] as f64) * scale;
        }
    }
    out
}
