use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::error::{Error, Result};

/// Per-device scoring MLP shared across the fleet: tanh hidden layers and a
/// linear scalar output.
///
/// Parameters are stored flat, layer by layer: the `out × in` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(layers: &[usize]) -> usize {
    layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl QNetwork {
    /// Uniform init in `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(layers: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        let mut offset = 0;
        for w in layers.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + n] {
                *p = rng.random_range(-bound..bound);
            }
            offset += n;
        }
        Ok(net)
    }

    pub fn zeros(layers: &[usize]) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) || *layers.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(format!("bad network shape {layers:?}")));
        }
        Ok(Self { layers: layers.to_vec(), params: vec![0.0; param_count(layers)] })
    }

    pub fn from_params(layers: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layers)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for shape {layers:?} (expected {})",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn copy_from(&mut self, other: &QNetwork) {
        self.layers.clone_from(&other.layers);
        self.params.clone_from(&other.params);
    }

    /// Hash of the exact parameter bits.
    pub fn param_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.layers.hash(&mut h);
        for p in &self.params {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let bias = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = bias[o]
                        + weights[o * fan_in..(o + 1) * fan_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if l == last { z } else { z.tanh() }
                })
                .collect();
            acts.push(out);
            offset += fan_in * fan_out + fan_out;
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        self.activations(x).last().unwrap()[0]
    }

    /// Adds `d_out · ∂score/∂θ` at input `x` into `grad`.
    pub fn accumulate_grad(&self, x: &[f64], d_out: f64, grad: &mut [f64]) {
        if d_out == 0.0 {
            return;
        }
        let acts = self.activations(x);
        let mut delta = vec![d_out];
        let mut offset = self.params.len();
        for l in (0..self.layers.len() - 1).rev() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            offset -= fan_in * fan_out + fan_out;
            let input = &acts[l];
            let (gw, gb) = grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for o in 0..fan_out {
                gb[o] += delta[o];
                for (g, a) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                    *g += delta[o] * a;
                }
            }
            if l > 0 {
                let weights = &self.params[offset..offset + fan_in * fan_out];
                delta = (0..fan_in)
                    .map(|i| {
                        let back: f64 = (0..fan_out).map(|o| weights[o * fan_in + i] * delta[o]).sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }
}

/// First-order optimizers over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Self::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        Self::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![], v: vec![], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Self::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Self::Adam { lr, beta1, beta2, eps, m, v, t } => {
                if m.len() != params.len() {
                    *m = vec![0.0; params.len()];
                    *v = vec![0.0; params.len()];
                    *t = 0;
                }
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
        }
    }
}

/// One score per row.
pub fn q_scores(net: &QNetwork, states: &[Vec<f64>]) -> Vec<f64> {
    states.iter().map(|s| net.forward(s)).collect()
}
