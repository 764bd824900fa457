//! A small deterministic classifier (flatten -> hidden relu -> softmax)
//! supplying exactly what the valuation stage needs from a model: per-sample
//! losses, gradients, Hessian-vector products, penultimate features, and an
//! SGD trainer whose per-step record supports hypergradient accumulation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{Dataset, LabeledSample};
use crate::math;
use crate::mlp::{self, Dims};
use crate::projection::Embedding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Arch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl Arch {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
            return Err(Error::invalid("all architecture dimensions must be >= 1"));
        }
        Ok(Arch {
            input_dim,
            hidden_dim,
            num_classes,
        })
    }

    pub fn param_len(&self) -> usize {
        self.dims().param_len()
    }

    pub(crate) fn dims(&self) -> Dims {
        Dims {
            input: self.input_dim,
            hidden: self.hidden_dim,
            output: self.num_classes,
        }
    }
}

/// Flat parameter vector: W1, b1, W2, b2 (see `mlp` for the exact layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub theta: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: &Arch) -> Self {
        Params {
            theta: vec![0.0; arch.param_len()],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 1 || self.batch_size > n {
            return Err(Error::InvalidParam(format!(
                "batch_size {} must lie in [1, {}]",
                self.batch_size, n
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// One SGD step as recorded in the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub eta: f64,
    pub batch_ids: Vec<u64>,
}

/// The deterministic per-step record of a training run, sufficient to replay
/// the trajectory for hypergradient work.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub final_params: Params,
}

/// What a step observer sees: the step index, the parameters *before* the
/// update, the minibatch (as positions into `train.samples()`), and the
/// learning rate used.
pub struct StepObservation<'a> {
    pub step: usize,
    pub params_before: &'a Params,
    pub batch_indices: &'a [usize],
    pub eta: f64,
}

/// Glorot-uniform weights with zero biases, deterministic per seed.
pub fn init_params(arch: &Arch, seed: u64) -> Params {
    Params {
        theta: mlp::init(arch.dims(), seed),
    }
}

fn check_sample_dims(arch: &Arch, sample: &LabeledSample) -> Result<()> {
    let n = sample.image.width() * sample.image.height();
    if n != arch.input_dim {
        return Err(Error::InvalidParam(format!(
            "sample {} has {} pixels, arch expects {}",
            sample.id, n, arch.input_dim
        )));
    }
    Ok(())
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|&l| math::exp(l - m)).sum();
    m + math::ln(s)
}

/// Cross-entropy of one sample: -log softmax(logits)[label], computed with
/// max subtraction so saturated logits cannot overflow.
pub fn per_sample_loss(arch: &Arch, params: &Params, sample: &LabeledSample) -> Result<f64> {
    check_sample_dims(arch, sample)?;
    let x = sample.image.to_reals();
    let fwd = mlp::forward(arch.dims(), &params.theta, &x);
    Ok(log_sum_exp(&fwd.output) - fwd.output[sample.label])
}

/// Mean loss over a batch and its gradient (length P).
pub fn grad(arch: &Arch, params: &Params, batch: &[&LabeledSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let dims = arch.dims();
    let scale = 1.0 / batch.len() as f64;
    let mut g = vec![0.0; dims.param_len()];
    let mut loss = 0.0;
    for sample in batch {
        check_sample_dims(arch, sample)?;
        let x = sample.image.to_reals();
        let fwd = mlp::forward(dims, &params.theta, &x);
        let lse = log_sum_exp(&fwd.output);
        loss += (lse - fwd.output[sample.label]) * scale;
        let mut d_out: Vec<f64> = fwd.output.iter().map(|&l| math::exp(l - lse) * scale).collect();
        d_out[sample.label] -= scale;
        mlp::backward(dims, &params.theta, &x, &fwd, &d_out, &mut g);
    }
    Ok((loss, g))
}

/// Central-difference Hessian-vector product of any gradient function:
/// (grad(theta + h v) - grad(theta - h v)) / (2 h) with
/// h = 1e-4 * max(1, ||theta||) / max(1, ||v||).
pub fn hvp_from_grad<F>(grad_fn: F, theta: &[f64], v: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let h = 1e-4 * math::norm2(theta).max(1.0) / math::norm2(v).max(1.0);
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t + h * vi).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, vi)| t - h * vi).collect();
    let gp = grad_fn(&plus);
    let gm = grad_fn(&minus);
    gp.iter()
        .zip(gm.iter())
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect()
}

/// HVP of the mean batch loss at `params`.
pub fn hvp(arch: &Arch, params: &Params, batch: &[&LabeledSample], v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != arch.param_len() {
        return Err(Error::InvalidParam(format!(
            "vector length {} does not match parameter count {}",
            v.len(),
            arch.param_len()
        )));
    }
    for sample in batch {
        check_sample_dims(arch, sample)?;
    }
    Ok(hvp_from_grad(
        |theta| {
            let p = Params {
                theta: theta.to_vec(),
            };
            grad(arch, &p, batch).expect("dims already checked").1
        },
        &params.theta,
        v,
    ))
}

/// Plain SGD with a seeded per-epoch shuffle. The optional observer runs
/// once per step, after the update, and sees the pre-update parameters.
/// Single-threaded by contract: the step sequence is the determinism anchor.
pub fn train_sgd(
    train: &Dataset,
    arch: &Arch,
    cfg: &TrainConfig,
    mut step_hook: Option<&mut dyn FnMut(StepObservation<'_>)>,
) -> Result<(Params, TrainTrace)> {
    cfg.validate(train.len())?;
    let n = train.len();
    let mut params = init_params(arch, cfg.seed);
    let mut rng = crate::rng::Rng::derive(cfg.seed, 0x7367_64);
    let mut order: Vec<usize> = (0..n).collect();
    let mut steps = Vec::new();
    let mut step = 0usize;
    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &train.samples()[i]).collect();
            let (_, g) = grad(arch, &params, &batch)?;
            let next: Vec<f64> = params
                .theta
                .iter()
                .zip(g.iter())
                .map(|(t, gi)| t - cfg.learning_rate * gi)
                .collect();
            let before = core::mem::replace(&mut params, Params { theta: next });
            steps.push(StepRecord {
                step,
                eta: cfg.learning_rate,
                batch_ids: chunk.iter().map(|&i| train.samples()[i].id).collect(),
            });
            if let Some(hook) = step_hook.as_deref_mut() {
                hook(StepObservation {
                    step,
                    params_before: &before,
                    batch_indices: chunk,
                    eta: cfg.learning_rate,
                });
            }
            step += 1;
        }
    }
    let trace = TrainTrace {
        seed: cfg.seed,
        steps,
        final_params: params.clone(),
    };
    Ok((params, trace))
}

/// Argmax of the logits, ties broken toward the lower class index.
pub fn predict(arch: &Arch, params: &Params, ds: &Dataset) -> Result<Vec<usize>> {
    let dims = arch.dims();
    ds.samples()
        .iter()
        .map(|s| {
            check_sample_dims(arch, s)?;
            let fwd = mlp::forward(dims, &params.theta, &s.image.to_reals());
            let mut best = 0;
            for (k, &l) in fwd.output.iter().enumerate() {
                if l > fwd.output[best] {
                    best = k;
                }
            }
            Ok(best)
        })
        .collect()
}

pub fn accuracy(arch: &Arch, params: &Params, ds: &Dataset) -> Result<f64> {
    let preds = predict(arch, params, ds)?;
    let hits = preds
        .iter()
        .zip(ds.samples())
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Post-relu hidden activations, one row per sample.
pub fn penultimate(arch: &Arch, params: &Params, ds: &Dataset) -> Result<Embedding> {
    let dims = arch.dims();
    let mut data = Vec::with_capacity(ds.len() * arch.hidden_dim);
    for s in ds.samples() {
        check_sample_dims(arch, s)?;
        let fwd = mlp::forward(dims, &params.theta, &s.image.to_reals());
        data.extend_from_slice(&fwd.hidden);
    }
    Embedding::new(ds.sample_ids(), arch.hidden_dim, data)
}

/// Mean val loss of `params` over a dataset.
pub fn mean_loss(arch: &Arch, params: &Params, ds: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for s in ds.samples() {
        total += per_sample_loss(arch, params, s)?;
    }
    Ok(total / ds.len() as f64)
}
