//! Fully connected Q-network with ReLU hidden layers and hand-written
//! backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Maps a state vector to one value per action.
pub trait QFunction {
    fn input_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn q_values(&self, input: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        // He-style uniform init for ReLU layers
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// One training example: input, chosen action and regression target.
#[derive(Debug, Clone, Copy)]
pub struct TdSample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

impl QNetwork {
    /// `sizes` lists every layer width, input first and action count last.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(
            sizes.len() >= 2,
            "a network needs an input and an output layer"
        );
        assert!(
            sizes.iter().all(|s| *s > 0),
            "layer widths must be positive"
        );
        let layers = sizes
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flattened parameters: for each layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    pub fn copy_from(&mut self, other: &QNetwork) {
        assert_eq!(
            self.layer_sizes(),
            other.layer_sizes(),
            "architecture mismatch"
        );
        self.layers.clone_from(&other.layers);
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Forward pass keeping every layer's post-activation output.
    fn forward_cached(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Mean squared TD error over `batch` and its gradient with respect to
    /// the flattened parameters.
    pub fn td_loss_and_gradient(&self, batch: &[TdSample<'_>]) -> (f64, Vec<f64>) {
        let mut grads: Vec<Dense> = self
            .layers
            .iter()
            .map(|l| Dense {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        let n = batch.len().max(1) as f64;
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for sample in batch {
            let acts = self.forward_cached(sample.input);
            let q = acts[last + 1][sample.action];
            let err = q - sample.target;
            loss += err * err;
            let g = 2.0 * err / n;
            if g == 0.0 {
                continue;
            }

            // output layer: only the chosen action row carries gradient
            let out_layer = &self.layers[last];
            let prev = &acts[last];
            let a = sample.action;
            {
                let gw = &mut grads[last];
                let row = &mut gw.weights[a * out_layer.inputs..(a + 1) * out_layer.inputs];
                row.iter_mut().zip(prev).for_each(|(w, x)| *w += g * x);
                gw.bias[a] += g;
            }
            if last == 0 {
                continue;
            }
            let mut delta: Vec<f64> = out_layer.weights
                [a * out_layer.inputs..(a + 1) * out_layer.inputs]
                .iter()
                .zip(&acts[last])
                .map(|(w, post)| if *post > 0.0 { w * g } else { 0.0 })
                .collect();

            for l in (0..last).rev() {
                let layer = &self.layers[l];
                let input = &acts[l];
                let gw = &mut grads[l];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut gw.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
                    gw.bias[o] += d;
                }
                if l == 0 {
                    break;
                }
                let mut next = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    next.iter_mut().zip(row).for_each(|(acc, w)| *acc += w * d);
                }
                for (v, post) in next.iter_mut().zip(&acts[l]) {
                    if *post <= 0.0 {
                        *v = 0.0;
                    }
                }
                delta = next;
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for g in grads {
            flat.extend(g.weights);
            flat.extend(g.bias);
        }
        (loss / n, flat)
    }

    /// Mean squared TD error without gradients.
    pub fn td_loss(&self, batch: &[TdSample<'_>]) -> f64 {
        let n = batch.len().max(1) as f64;
        batch
            .iter()
            .map(|s| {
                let e = self.q_values(s.input)[s.action] - s.target;
                e * e
            })
            .sum::<f64>()
            / n
    }

    /// Plain gradient step with the gradient rescaled to at most `max_norm`.
    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64, max_norm: f64) {
        assert_eq!(grad.len(), self.param_count(), "gradient length mismatch");
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if max_norm > 0.0 && norm > max_norm {
            max_norm / norm
        } else {
            1.0
        };
        let step = learning_rate * scale;
        let mut at = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w -= step * grad[at];
                at += 1;
            }
        }
    }
}

impl QFunction for QNetwork {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn num_actions(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    fn q_values(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        let last = self.layers.len() - 1;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}
