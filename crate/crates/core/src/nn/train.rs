use serde::{Deserialize, Serialize};

use super::network::{backward, cross_entropy, forward_trace, BackwardScratch, Checkpoint, Gradients, Trace};
use super::real::Real;
use super::spec::LayerPlan;
use crate::error::{Error, Result};
use crate::rng;

/// Optimizer settings for minibatch SGD with momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            batch: 32,
            epochs: 20,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it is the "no update" control run
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("learning rate {} must be >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One network input with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: Vec<T>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

fn check_data<T: Real>(ckpt: &Checkpoint<T>, data: &[Sample<T>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let n = ckpt.spec.input_len();
    for (i, s) in data.iter().enumerate() {
        if s.label >= ckpt.spec.class_count {
            return Err(Error::InvalidParameter(format!(
                "sample {i} has label {} but the network has {} classes",
                s.label, ckpt.spec.class_count
            )));
        }
        if s.input.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} input values"),
                actual: format!("{} in sample {i}", s.input.len()),
            });
        }
    }
    Ok(())
}

fn trainable_mask(plan: &[LayerPlan], freeze: &[&str], params: usize) -> Result<Vec<bool>> {
    for name in freeze {
        if !plan.iter().any(|p| p.name == *name) {
            return Err(Error::InvalidParameter(format!("no layer named {name:?} to freeze")));
        }
    }
    let mut mask = vec![true; params];
    for p in plan {
        if let Some(i) = p.param_index {
            if freeze.contains(&p.name.as_str()) {
                mask[i] = false;
            }
        }
    }
    if !mask.iter().any(|&t| t) {
        return Err(Error::InvalidParameter("every parametric layer is frozen".into()));
    }
    Ok(mask)
}

/// Sum of per-sample gradients over `samples` plus the summed loss.
fn accumulate<T: Real>(
    ckpt: &Checkpoint<T>,
    plan: &[LayerPlan],
    samples: impl Iterator<Item = (usize, usize)>,
    data: &[Sample<T>],
    trainable: &[bool],
    grads: &mut Gradients<T>,
    trace: &mut Trace<T>,
    scratch: &mut BackwardScratch<T>,
) -> Result<f64> {
    let mut loss = 0.0;
    for (_, idx) in samples {
        let s = &data[idx];
        forward_trace(ckpt, plan, &s.input, trace)?;
        loss += cross_entropy(trace, s.label).as_f64();
        backward(ckpt, plan, trace, s.label, trainable, grads, scratch);
    }
    Ok(loss)
}

/// Mean cross-entropy gradient over the whole data set, all layers.
pub fn gradient<T: Real>(ckpt: &Checkpoint<T>, data: &[Sample<T>]) -> Result<(Gradients<T>, f64)> {
    let plan = ckpt.validate()?;
    check_data(ckpt, data)?;
    let trainable = vec![true; ckpt.params.len()];
    let mut grads = Gradients::zeros_like(ckpt);
    let loss = accumulate(
        ckpt,
        &plan,
        (0..data.len()).enumerate(),
        data,
        &trainable,
        &mut grads,
        &mut Trace::new(),
        &mut BackwardScratch::new(),
    )?;
    let inv = T::one() / T::from_f64_lossy(data.len() as f64);
    grads.scale(inv);
    Ok((grads, loss / data.len() as f64))
}

/// Mean cross-entropy over a data set.
pub fn mean_loss<T: Real>(ckpt: &Checkpoint<T>, data: &[Sample<T>]) -> Result<f64> {
    let plan = ckpt.validate()?;
    check_data(ckpt, data)?;
    let mut trace = Trace::new();
    let mut total = 0.0;
    for s in data {
        forward_trace(ckpt, &plan, &s.input, &mut trace)?;
        total += cross_entropy(&trace, s.label).as_f64();
    }
    Ok(total / data.len() as f64)
}

/// Minibatch SGD with momentum on cross-entropy.
///
/// Epoch order comes from a Fisher-Yates shuffle on a ChaCha8 stream seeded
/// with `hyper.seed`. Each step applies `v = momentum * v - lr * g` and
/// `w += v`, with `g` the batch-mean gradient. Layers named in `freeze` are
/// never written.
pub fn train<T: Real>(
    ckpt: &Checkpoint<T>,
    data: &[Sample<T>],
    hyper: &Hyper,
    freeze: &[&str],
) -> Result<TrainOutcome<T>> {
    hyper.validate()?;
    let plan = ckpt.validate()?;
    check_data(ckpt, data)?;
    let trainable = trainable_mask(&plan, freeze, ckpt.params.len())?;

    let mut net = ckpt.clone();
    let mut velocity = Gradients::zeros_like(&net);
    let mut grads = Gradients::zeros_like(&net);
    let mut trace = Trace::new();
    let mut scratch = BackwardScratch::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::seeded(hyper.seed);
    let lr = T::from_f64_lossy(hyper.lr);
    let mu = T::from_f64_lossy(hyper.momentum);
    let mut history = Vec::with_capacity(hyper.epochs);

    for _ in 0..hyper.epochs {
        rng::shuffle(&mut shuffle_rng, &mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            grads.clear();
            epoch_loss += accumulate(
                &net,
                &plan,
                chunk.iter().copied().enumerate(),
                data,
                &trainable,
                &mut grads,
                &mut trace,
                &mut scratch,
            )?;
            let inv = T::one() / T::from_f64_lossy(chunk.len() as f64);
            for (i, layer) in net.params.iter_mut().enumerate() {
                if !trainable[i] {
                    continue;
                }
                for (w, (v, g)) in layer
                    .weight
                    .data
                    .iter_mut()
                    .zip(velocity.weight[i].iter_mut().zip(&grads.weight[i]))
                {
                    *v = mu * *v - lr * (*g * inv);
                    *w += *v;
                }
                for (b, (v, g)) in layer
                    .bias
                    .data
                    .iter_mut()
                    .zip(velocity.bias[i].iter_mut().zip(&grads.bias[i]))
                {
                    *v = mu * *v - lr * (*g * inv);
                    *b += *v;
                }
            }
        }
        history.push(epoch_loss / data.len() as f64);
    }

    net.train_meta.seed = hyper.seed;
    net.train_meta.epochs = hyper.epochs;
    net.train_meta.lr = hyper.lr;
    net.train_meta.momentum = hyper.momentum;
    net.train_meta.batch = hyper.batch;
    Ok(TrainOutcome {
        checkpoint: net,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_network, predict};
    use crate::nn::spec::{InputShape, LayerSpec, NetworkSpec};

    fn tiny_conv_spec() -> NetworkSpec {
        NetworkSpec {
            input: InputShape { height: 8, width: 8, channels: 1 },
            layers: vec![
                LayerSpec::Conv { filters: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::Softmax,
            ],
            class_count: 2,
        }
    }

    fn dark_bright(n: usize, seed: u64) -> Vec<Sample<f64>> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let base = if label == 0 { 0.1 } else { 0.9 };
                Sample {
                    input: (0..64).map(|_| base + rng::uniform(&mut r, -0.05, 0.05)).collect(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let ck = init_network::<f64>(&tiny_conv_spec(), 1).unwrap();
        let hyper = Hyper { lr: 0.0, epochs: 3, batch: 4, ..Default::default() };
        let out = train(&ck, &dark_bright(10, 0), &hyper, &[]).unwrap();
        assert_eq!(out.checkpoint.params, ck.params);
        assert_eq!(out.loss_history.len(), 3);
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let ck = init_network::<f64>(&tiny_conv_spec(), 2).unwrap();
        let data = dark_bright(40, 1);
        let hyper = Hyper { lr: 0.1, momentum: 0.9, batch: 8, epochs: 5, seed: 3 };
        let out = train(&ck, &data, &hyper, &[]).unwrap();
        let correct = data
            .iter()
            .filter(|s| predict(&out.checkpoint, &s.input).unwrap().0 == s.label)
            .count();
        assert_eq!(correct, data.len(), "loss history {:?}", out.loss_history);
    }

    #[test]
    fn frozen_layers_are_untouched() {
        let ck = init_network::<f64>(&tiny_conv_spec(), 2).unwrap();
        let hyper = Hyper { lr: 0.1, epochs: 2, batch: 4, ..Default::default() };
        let out = train(&ck, &dark_bright(12, 4), &hyper, &["conv1"]).unwrap();
        assert_eq!(out.checkpoint.layer_params("conv1"), ck.layer_params("conv1"));
        assert_ne!(out.checkpoint.layer_params("fc1"), ck.layer_params("fc1"));
    }

    #[test]
    fn training_errors() {
        let ck = init_network::<f64>(&tiny_conv_spec(), 2).unwrap();
        let hyper = Hyper::default();
        assert!(matches!(train(&ck, &[], &hyper, &[]), Err(Error::InsufficientData(_))));
        let data = dark_bright(4, 0);
        assert!(train(&ck, &data, &hyper, &["conv1", "fc1"]).is_err());
        assert!(train(&ck, &data, &hyper, &["conv9"]).is_err());
        let bad = vec![Sample { input: vec![0.0; 64], label: 2 }];
        assert!(train(&ck, &bad, &hyper, &[]).is_err());
        let bad_hyper = Hyper { momentum: 1.0, ..Default::default() };
        assert!(train(&ck, &data, &bad_hyper, &[]).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let ck = init_network::<f32>(&tiny_conv_spec(), 5).unwrap();
        let data: Vec<Sample<f32>> = dark_bright(16, 2)
            .into_iter()
            .map(|s| Sample { input: s.input.iter().map(|&v| v as f32).collect(), label: s.label })
            .collect();
        let hyper = Hyper { lr: 0.05, epochs: 3, batch: 5, seed: 8, ..Default::default() };
        let a = train(&ck, &data, &hyper, &[]).unwrap();
        let b = train(&ck, &data, &hyper, &[]).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.loss_history, b.loss_history);
    }
}
