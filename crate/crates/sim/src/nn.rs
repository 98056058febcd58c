//! Just enough neural network for deep Q-learning on this state space: a
//! dense rectifier MLP trained by plain SGD on chosen-action squared error,
//! a bounded FIFO replay buffer, and Bellman-target helpers.
//!
//! Everything is scalar `f64` with no optimizer state, so analytic gradients
//! can be checked against central finite differences exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::env::{AttackEnv, EnvState};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("malformed network artifact: {0}")]
    Artifact(String),
}

/// One stored interaction: feature vectors on both sides, the chosen action,
/// the (possibly scaled) reward, and whether the episode ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// 0/1 feature vector in state-key bit order: owned, discovered, credentials,
/// executed vulnerabilities, collected bonuses. Width is fixed per scenario.
pub fn encode_features(env: &AttackEnv, state: &EnvState) -> Vec<f64> {
    let widths = env.bit_widths();
    let masks = [
        state.owned,
        state.discovered,
        state.credentials,
        state.executed,
        state.collected,
    ];
    let mut out = Vec::with_capacity(env.key_width());
    for (mask, width) in masks.into_iter().zip(widths) {
        for i in 0..width {
            out.push(if mask & (1u64 << i) != 0 { 1.0 } else { 0.0 });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    /// Row-major `out_dim x in_dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Feed-forward network: rectifiers on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Gradients with the same shape as the network parameters: one weight and
/// one bias vector per layer, row-major, matching the flat parameter order
/// of [`Mlp::param`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpFile {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-style initialization: weights drawn from N(0, sqrt(2 / fan_in)),
    /// biases zero. Deterministic under the provided generator.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Mlp {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .expect("positive standard deviation");
                Layer {
                    weights: (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect(),
                    biases: vec![0.0; fan_out],
                    in_dim: fan_in,
                    out_dim: fan_out,
                }
            })
            .collect();
        Mlp {
            sizes: sizes.to_vec(),
            layers,
        }
    }

    /// All-zero parameters; useful as a fixed point in tests.
    pub fn zeros(sizes: &[usize]) -> Mlp {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|pair| Layer {
                weights: vec![0.0; pair[0] * pair[1]],
                biases: vec![0.0; pair[1]],
                in_dim: pair[0],
                out_dim: pair[1],
            })
            .collect();
        Mlp {
            sizes: sizes.to_vec(),
            layers,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Pure forward pass. Panics if `x` does not match the input width.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&current, &mut next);
            if i + 1 < self.layers.len() {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        current
    }

    /// Forward pass keeping every layer's post-activation output; used by
    /// backpropagation.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim(), "input width mismatch");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.forward_into(activations.last().unwrap(), &mut out);
            if i + 1 < self.layers.len() {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        activations
    }

    /// Mean squared error over the chosen-action outputs only, with analytic
    /// gradients for every parameter. Non-chosen outputs receive no error
    /// signal, matching the Q-regression semantics.
    pub fn loss_and_gradients(&self, batch: &[Transition], targets: &[f64]) -> (f64, Gradients) {
        assert!(!batch.is_empty(), "empty batch");
        assert_eq!(batch.len(), targets.len(), "batch/target length mismatch");
        let mut grads = Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;

        for (transition, &target) in batch.iter().zip(targets) {
            let activations = self.forward_trace(&transition.s);
            let output = activations.last().unwrap();
            assert!(
                transition.a < output.len(),
                "action index {} outside output width {}",
                transition.a,
                output.len()
            );
            let err = output[transition.a] - target;
            loss += scale * err * err;

            // Output delta: d(loss)/d(output) is zero except at the chosen
            // action.
            let mut delta = vec![0.0; output.len()];
            delta[transition.a] = 2.0 * scale * err;

            for layer_index in (0..self.layers.len()).rev() {
                let layer = &self.layers[layer_index];
                let input = &activations[layer_index];
                let gw = &mut grads.weights[layer_index];
                let gb = &mut grads.biases[layer_index];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                if layer_index == 0 {
                    break;
                }
                // Propagate through the weights, then through the previous
                // layer's rectifier (its output is zero exactly where the
                // rectifier clamped).
                let mut prev_delta = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (pd, w) in prev_delta.iter_mut().zip(row) {
                        *pd += d * w;
                    }
                }
                for (pd, act) in prev_delta.iter_mut().zip(input) {
                    if *act <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        (loss, grads)
    }

    /// One plain gradient-descent step on the batch; returns the pre-update
    /// loss. A non-finite return is the divergence signal.
    pub fn sgd_step(&mut self, batch: &[Transition], targets: &[f64], lr: f64) -> f64 {
        let (loss, grads) = self.loss_and_gradients(batch, targets);
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(grads.biases.iter()))
        {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
        loss
    }

    /// Number of scalar parameters (weights then biases, layer by layer).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Flat parameter accessor matching [`Mlp::param_count`] order.
    pub fn param(&self, index: usize) -> f64 {
        let (layer, offset) = self.locate(index);
        let l = &self.layers[layer];
        if offset < l.weights.len() {
            l.weights[offset]
        } else {
            l.biases[offset - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, offset) = self.locate(index);
        let l = &mut self.layers[layer];
        if offset < l.weights.len() {
            l.weights[offset] = value;
        } else {
            l.biases[offset - l.weights.len()] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            let len = l.weights.len() + l.biases.len();
            if index < len {
                return (i, index);
            }
            index -= len;
        }
        panic!("parameter index out of range");
    }

    /// JSON weight snapshot: layer sizes plus row-major parameters.
    pub fn to_json(&self) -> String {
        let file = MlpFile {
            sizes: self.sizes.clone(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        };
        let mut text = serde_json::to_string(&file).expect("network serialization");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Mlp, NnError> {
        let file: MlpFile =
            serde_json::from_str(text).map_err(|e| NnError::Artifact(e.to_string()))?;
        if file.sizes.len() < 2 {
            return Err(NnError::Artifact("fewer than two layer sizes".into()));
        }
        if file.weights.len() != file.sizes.len() - 1 || file.biases.len() != file.sizes.len() - 1 {
            return Err(NnError::Artifact("layer count mismatch".into()));
        }
        let mut layers = Vec::new();
        for (i, pair) in file.sizes.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            if file.weights[i].len() != in_dim * out_dim || file.biases[i].len() != out_dim {
                return Err(NnError::Artifact(format!("layer {i} shape mismatch")));
            }
            if file.weights[i].iter().chain(&file.biases[i]).any(|v| !v.is_finite()) {
                return Err(NnError::Artifact(format!("layer {i} has non-finite parameters")));
            }
            layers.push(Layer {
                weights: file.weights[i].clone(),
                biases: file.biases[i].clone(),
                in_dim,
                out_dim,
            });
        }
        Ok(Mlp {
            sizes: file.sizes,
            layers,
        })
    }
}

/// Bounded FIFO transition store with uniform, seeded sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    buffer: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            buffer: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Appends a transition, evicting the oldest one at capacity.
    pub fn push(&mut self, transition: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(transition);
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.buffer.get(index)
    }

    /// Uniform sample with replacement, or `None` while underfilled.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Option<Vec<Transition>> {
        if self.buffer.len() < batch_size {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| self.buffer[rng.random_range(0..self.buffer.len())].clone())
                .collect(),
        )
    }
}

/// `target_i = r_i + (done_i ? 0 : gamma * max(target_net(s_next_i)))`.
pub fn bellman_targets(batch: &[Transition], target_net: &Mlp, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.r
            } else {
                let next = target_net.forward(&t.s_next);
                let best = next.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                t.r + gamma * best
            }
        })
        .collect()
}

/// Deep Q-learning knobs. The architecture is `input -> hidden... -> actions`
/// with rectifier activations. Rewards are scaled into unit range before
/// regression — node values reach thousands, and squared errors that large
/// would need a vanishingly small learning rate — which leaves greedy action
/// choices unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqlConfig {
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Target network refresh cadence, in gradient steps.
    pub target_sync: u64,
    pub lr: f64,
    pub reward_scale: f64,
    /// Training aborts with a divergence diagnostic past this loss.
    pub loss_ceiling: f64,
}

impl Default for DqlConfig {
    fn default() -> Self {
        DqlConfig {
            hidden: vec![64, 64],
            buffer_capacity: 10_000,
            batch_size: 32,
            target_sync: 100,
            lr: 1e-3,
            reward_scale: 1e-3,
            loss_ceiling: 1e6,
        }
    }
}

impl DqlConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(NnError::Artifact("hidden sizes must be positive".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(NnError::Artifact(
                "buffer capacity must cover at least one batch".into(),
            ));
        }
        if self.target_sync == 0 {
            return Err(NnError::Artifact("target sync cadence must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::Artifact("learning rate must be positive".into()));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(NnError::Artifact("reward scale must be positive".into()));
        }
        Ok(())
    }

    /// Full layer-size list for a given scenario shape.
    pub fn layer_sizes(&self, input_dim: usize, action_count: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(action_count);
        sizes
    }
}
