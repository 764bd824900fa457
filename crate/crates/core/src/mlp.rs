//! Shared one-hidden-layer machinery behind both the classifier and the
//! Siamese encoder: flatten -> linear -> relu -> linear. Parameters live in
//! one flat vector laid out as W1 (hidden x input, row-major), b1, W2
//! (output x hidden, row-major), b2.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn param_len(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.output + self.output
    }

    fn b1_at(&self) -> usize {
        self.input * self.hidden
    }

    fn w2_at(&self) -> usize {
        self.b1_at() + self.hidden
    }

    fn b2_at(&self) -> usize {
        self.w2_at() + self.hidden * self.output
    }
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init(dims: Dims, seed: u64) -> Vec<f64> {
    let mut theta = vec![0.0; dims.param_len()];
    let mut rng = Rng::derive(seed, 0x696e_6974);
    let s1 = math::sqrt(6.0 / (dims.input + dims.hidden) as f64);
    for w in &mut theta[..dims.b1_at()] {
        *w = rng.range(-s1, s1);
    }
    let s2 = math::sqrt(6.0 / (dims.hidden + dims.output) as f64);
    let (w2_at, b2_at) = (dims.w2_at(), dims.b2_at());
    for w in &mut theta[w2_at..b2_at] {
        *w = rng.range(-s2, s2);
    }
    theta
}

pub struct Forward {
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn forward(dims: Dims, theta: &[f64], x: &[f64]) -> Forward {
    debug_assert_eq!(theta.len(), dims.param_len());
    debug_assert_eq!(x.len(), dims.input);
    let b1 = &theta[dims.b1_at()..dims.w2_at()];
    let mut pre_hidden = vec![0.0; dims.hidden];
    for j in 0..dims.hidden {
        let row = &theta[j * dims.input..(j + 1) * dims.input];
        pre_hidden[j] = b1[j] + math::dot(row, x);
    }
    let hidden: Vec<f64> = pre_hidden.iter().map(|&p| if p > 0.0 { p } else { 0.0 }).collect();
    let w2 = &theta[dims.w2_at()..dims.b2_at()];
    let b2 = &theta[dims.b2_at()..];
    let mut output = vec![0.0; dims.output];
    for k in 0..dims.output {
        let row = &w2[k * dims.hidden..(k + 1) * dims.hidden];
        output[k] = b2[k] + math::dot(row, &hidden);
    }
    Forward {
        pre_hidden,
        hidden,
        output,
    }
}

/// Accumulates d(loss)/d(theta) into `grad` given the upstream gradient on
/// the output layer. The relu subgradient at exactly zero is taken as zero.
pub fn backward(dims: Dims, theta: &[f64], x: &[f64], fwd: &Forward, d_output: &[f64], grad: &mut [f64]) {
    debug_assert_eq!(grad.len(), dims.param_len());
    debug_assert_eq!(d_output.len(), dims.output);
    let w2 = &theta[dims.w2_at()..dims.b2_at()];
    let (w2_at, b2_at) = (dims.w2_at(), dims.b2_at());
    let mut d_hidden = vec![0.0; dims.hidden];
    for k in 0..dims.output {
        let dk = d_output[k];
        if dk == 0.0 {
            continue;
        }
        let row = k * dims.hidden;
        for j in 0..dims.hidden {
            grad[w2_at + row + j] += dk * fwd.hidden[j];
            d_hidden[j] += dk * w2[row + j];
        }
        grad[b2_at + k] += dk;
    }
    let b1_at = dims.b1_at();
    for j in 0..dims.hidden {
        if fwd.pre_hidden[j] <= 0.0 || d_hidden[j] == 0.0 {
            continue;
        }
        let dj = d_hidden[j];
        let row = j * dims.input;
        for i in 0..dims.input {
            grad[row + i] += dj * x[i];
        }
        grad[b1_at + j] += dj;
    }
}
