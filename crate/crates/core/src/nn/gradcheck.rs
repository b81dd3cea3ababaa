//! Finite-difference check of the analytic backward pass, in `f64`.
//!
//! ReLU and max-pool are not differentiable where a pre-activation is 0 or
//! two pooled values tie. Before checking, several random input batches are
//! drawn and the one whose smallest distance to any such kink is largest is
//! used, so the central differences never straddle a kink.

use super::network::{forward_trace, init_network, Checkpoint, Trace};
use super::real::Real;
use super::spec::{InputShape, LayerSpec, NetworkSpec, Shape};
use super::train::{gradient, mean_loss, Sample};
use crate::error::Result;
use crate::rng;

pub const DEFAULT_EPS: f64 = 1e-4;
const CANDIDATE_BATCHES: u64 = 32;
const BATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_fd - g| / max(|g_fd| + |g|, 1e-8)` over every parameter.
    pub max_rel_error: f64,
    pub params_checked: usize,
    /// Smallest distance from a ReLU input to 0 or between the top two
    /// values of a pooling window, for the batch that was used.
    pub kink_margin: f64,
}

/// Conv(2, 3x3) -> relu -> pool -> dense(4) -> softmax on 8x8x1 inputs.
pub fn toy_spec() -> NetworkSpec {
    NetworkSpec {
        input: InputShape { height: 8, width: 8, channels: 1 },
        layers: vec![
            LayerSpec::Conv { filters: 2, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Softmax,
        ],
        class_count: 4,
    }
}

fn kink_margin(ckpt: &Checkpoint<f64>, data: &[Sample<f64>]) -> Result<f64> {
    let plan = ckpt.validate()?;
    let mut trace = Trace::new();
    let mut margin = f64::INFINITY;
    for s in data {
        forward_trace(ckpt, &plan, &s.input, &mut trace)?;
        for (i, layer) in plan.iter().enumerate() {
            let x = &trace.acts[i];
            match (layer.spec, layer.input) {
                (LayerSpec::Relu, _) => {
                    margin = x.iter().fold(margin, |m, v| m.min(v.abs()));
                }
                (LayerSpec::MaxPool, Shape::Volume { channels, height, width }) => {
                    for c in 0..channels {
                        for oy in 0..height / 2 {
                            for ox in 0..width / 2 {
                                let b = c * height * width + 2 * oy * width + 2 * ox;
                                let mut w = [x[b], x[b + 1], x[b + width], x[b + width + 1]];
                                w.sort_by(|a, b| b.total_cmp(a));
                                // a tie among zeros is harmless: no gradient flows there
                                if w[0] > 0.0 {
                                    margin = margin.min(w[0] - w[1]);
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
    Ok(margin)
}

fn slot(c: &mut Checkpoint<f64>, li: usize, bias: bool, j: usize) -> &mut f64 {
    if bias {
        &mut c.params[li].bias.data[j]
    } else {
        &mut c.params[li].weight.data[j]
    }
}

/// Central difference of the mean loss in one parameter.
fn central(ckpt: &mut Checkpoint<f64>, data: &[Sample<f64>], li: usize, bias: bool, j: usize, eps: f64) -> Result<f64> {
    let orig = *slot(ckpt, li, bias, j);
    *slot(ckpt, li, bias, j) = orig + eps;
    let plus = mean_loss(ckpt, data)?;
    *slot(ckpt, li, bias, j) = orig - eps;
    let minus = mean_loss(ckpt, data)?;
    *slot(ckpt, li, bias, j) = orig;
    Ok((plus - minus) / (2.0 * eps))
}

fn random_batch(spec: &NetworkSpec, seed: u64) -> Vec<Sample<f64>> {
    let mut r = rng::seeded(seed);
    (0..BATCH)
        .map(|_| Sample {
            input: (0..spec.input_len()).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect(),
            label: rng::below(&mut r, spec.class_count),
        })
        .collect()
}

pub fn grad_check_report(spec: &NetworkSpec, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let mut ckpt = init_network::<f64>(spec, seed)?;
    // nonzero biases so the check covers them away from a symmetric point
    let mut r = rng::child(seed, u64::MAX);
    for p in &mut ckpt.params {
        p.bias.data.iter_mut().for_each(|b| *b = rng::uniform(&mut r, -0.1, 0.1));
    }

    let mut best: Option<(f64, Vec<Sample<f64>>)> = None;
    for c in 0..CANDIDATE_BATCHES {
        let batch = random_batch(spec, rng::child_seed(seed, c));
        let m = kink_margin(&ckpt, &batch)?;
        if best.as_ref().is_none_or(|(bm, _)| m > *bm) {
            best = Some((m, batch));
        }
    }
    let (margin, data) = best.expect("at least one candidate");

    let (analytic, _) = gradient(&ckpt, &data)?;
    let mut max_err = 0.0f64;
    let mut checked = 0;
    for li in 0..ckpt.params.len() {
        for which in 0..2 {
            let n = if which == 0 { ckpt.params[li].weight.data.len() } else { ckpt.params[li].bias.data.len() };
            for j in 0..n {
                let fd = central(&mut ckpt, &data, li, which == 1, j, eps)?;
                let g = if which == 0 { analytic.weight[li][j] } else { analytic.bias[li][j] };
                let err = (fd - g).abs() / (fd.abs() + g.abs()).max(1e-8);
                max_err = max_err.max(err);
                checked += 1;
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_err,
        params_checked: checked,
        kink_margin: margin,
    })
}

/// Maximum relative error between analytic and central-difference gradients.
pub fn grad_check(spec: &NetworkSpec, seed: u64, eps: f64) -> Result<f64> {
    Ok(grad_check_report(spec, seed, eps)?.max_rel_error)
}

/// Cross-entropy gradient for an `f64` checkpoint by central differences,
/// one parameter at a time, in checkpoint order (weights then bias per layer).
pub fn finite_difference_gradient<T: Real>(ckpt: &Checkpoint<T>, data: &[Sample<T>], eps: f64) -> Result<Vec<Vec<f64>>> {
    let mut work = ckpt.convert::<f64>();
    let data64: Vec<Sample<f64>> = data
        .iter()
        .map(|s| Sample {
            input: s.input.iter().map(|v| v.as_f64()).collect(),
            label: s.label,
        })
        .collect();
    let mut out = Vec::new();
    for li in 0..work.params.len() {
        for which in 0..2 {
            let n = if which == 0 { work.params[li].weight.data.len() } else { work.params[li].bias.data.len() };
            let mut g = Vec::with_capacity(n);
            for j in 0..n {
                g.push(central(&mut work, &data64, li, which == 1, j, eps)?);
            }
            out.push(g);
        }
    }
    Ok(out)
}
