use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of a Q-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
    /// Separate value and advantage heads when set; a single Q head otherwise.
    pub dueling: bool,
}

/// Fully connected layer, weights stored row-major as `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-uniform weights, zero bias.
    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs.max(1))
            .take(self.outputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `grad += delta ⊗ input` and returns `Wᵀ delta`.
    fn backward(&self, input: &[f64], delta: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut upstream = vec![0.0; self.inputs];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = o * self.inputs;
            grad.bias[o] += d;
            for i in 0..self.inputs {
                grad.weights[row + i] += d * input[i];
                upstream[i] += self.weights[row + i] * d;
            }
        }
        upstream
    }
}

/// Outputs of the two heads for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    /// State value; `None` for a single-head network.
    pub value: Option<f64>,
    pub advantages: Vec<f64>,
    pub q: Vec<f64>,
}

/// Combines the heads: `Q = V + A - mean(A)`.
pub fn dueling_q(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}

struct ForwardTrace {
    /// Input followed by every trunk activation.
    activations: Vec<Vec<f64>>,
    q: Vec<f64>,
}

/// Multilayer perceptron with rectifier hidden layers and an optional
/// dueling head.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    shape: NetworkShape,
    pub(crate) trunk: Vec<Dense>,
    pub(crate) value: Option<Dense>,
    pub(crate) advantage: Dense,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(shape: NetworkShape, rng: &mut R) -> Self {
        Self::build(shape, |i, o| Dense::init(i, o, rng))
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        Self::build(shape, Dense::zeros)
    }

    fn build(shape: NetworkShape, mut layer: impl FnMut(usize, usize) -> Dense) -> Self {
        let mut trunk = Vec::with_capacity(shape.hidden.len());
        let mut width = shape.input_dim;
        for &h in &shape.hidden {
            trunk.push(layer(width, h));
            width = h;
        }
        let value = shape.dueling.then(|| layer(width, 1));
        let advantage = layer(width, shape.actions);
        QNetwork {
            shape,
            trunk,
            value,
            advantage,
        }
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn actions(&self) -> usize {
        self.shape.actions
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(self.value.as_ref())
            .chain(std::iter::once(&self.advantage))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(self.value.as_mut())
            .chain(std::iter::once(&mut self.advantage))
    }

    /// Parameter tensors in a fixed order: per layer, weights then bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&params[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.shape.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input_dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn trunk_forward(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(state.to_vec());
        for layer in &self.trunk {
            let mut z = layer.forward(activations.last().unwrap());
            for v in &mut z {
                *v = v.max(0.0);
            }
            activations.push(z);
        }
        activations
    }

    pub fn heads(&self, state: &[f64]) -> Result<HeadOutputs> {
        self.check_input(state)?;
        let activations = self.trunk_forward(state);
        let features = activations.last().unwrap();
        let advantages = self.advantage.forward(features);
        let value = self.value.as_ref().map(|v| v.forward(features)[0]);
        let q = match value {
            Some(v) => dueling_q(v, &advantages),
            None => advantages.clone(),
        };
        Ok(HeadOutputs {
            value,
            advantages,
            q,
        })
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        Ok(self.heads(state)?.q)
    }

    fn forward_trace(&self, state: &[f64]) -> ForwardTrace {
        let activations = self.trunk_forward(state);
        let features = activations.last().unwrap();
        let advantages = self.advantage.forward(features);
        let q = match &self.value {
            Some(v) => dueling_q(v.forward(features)[0], &advantages),
            None => advantages,
        };
        ForwardTrace { activations, q }
    }

    /// Backpropagates `dL/dQ` for one sample, accumulating into `grad`.
    fn backward(&self, trace: &ForwardTrace, dq: &[f64], grad: &mut QNetwork) {
        let features = trace.activations.last().unwrap();
        let mut upstream = match (&self.value, grad.value.as_mut()) {
            (Some(value), Some(value_grad)) => {
                // dQ_a/dV = 1, dQ_a/dA_j = [a == j] - 1/|A|
                let total: f64 = dq.iter().sum();
                let mean = total / dq.len() as f64;
                let dadv: Vec<f64> = dq.iter().map(|d| d - mean).collect();
                let mut up = value.backward(features, &[total], value_grad);
                let up_adv = self.advantage.backward(features, &dadv, &mut grad.advantage);
                for (u, a) in up.iter_mut().zip(up_adv) {
                    *u += a;
                }
                up
            }
            _ => self.advantage.backward(features, dq, &mut grad.advantage),
        };
        for (l, layer) in self.trunk.iter().enumerate().rev() {
            let output = &trace.activations[l + 1];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(output)
                .map(|(d, a)| if *a > 0.0 { *d } else { 0.0 })
                .collect();
            upstream = layer.backward(&trace.activations[l], &delta, &mut grad.trunk[l]);
        }
    }

    /// Mean squared error `mean((Q(s,a) - y)²)` over the samples and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, samples: &[(&[f64], usize, f64)]) -> Result<(f64, QNetwork)> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut grad = QNetwork::zeros(self.shape.clone());
        let n = samples.len() as f64;
        let mut loss = 0.0;
        let mut dq = vec![0.0; self.shape.actions];
        for &(state, action, target) in samples {
            self.check_input(state)?;
            if action >= self.shape.actions {
                return Err(Error::DimensionMismatch {
                    expected: self.shape.actions,
                    got: action + 1,
                });
            }
            let trace = self.forward_trace(state);
            let err = trace.q[action] - target;
            loss += err * err;
            dq.iter_mut().for_each(|d| *d = 0.0);
            dq[action] = 2.0 * err / n;
            self.backward(&trace, &dq, &mut grad);
        }
        Ok((loss / n, grad))
    }

    pub fn grad_norm(grad: &QNetwork) -> f64 {
        grad.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// `θ ← θ - lr·g`, with `g` rescaled to norm `clip` when it is longer.
    pub fn apply_gradient(&mut self, grad: &QNetwork, learning_rate: f64, clip: Option<f64>) {
        let norm = Self::grad_norm(grad);
        let scale = match clip {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let step = learning_rate * scale;
        for (p, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            for (pv, gv) in p.iter_mut().zip(g) {
                *pv -= step * gv;
            }
        }
    }

    pub fn same_shape(&self, other: &QNetwork) -> bool {
        self.shape == other.shape
    }

    pub fn copy_from(&mut self, other: &QNetwork) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch);
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn shape(dueling: bool) -> NetworkShape {
        NetworkShape {
            input_dim: 3,
            hidden: vec![5, 4],
            actions: 2,
            dueling,
        }
    }

    /// Sets the heads so that V = `value` and A = `advantages` regardless of input.
    fn constant_heads(value: f64, advantages: &[f64]) -> QNetwork {
        let mut net = QNetwork::zeros(NetworkShape {
            input_dim: 1,
            hidden: vec![],
            actions: advantages.len(),
            dueling: true,
        });
        net.value.as_mut().unwrap().bias[0] = value;
        net.advantage.bias.copy_from_slice(advantages);
        net
    }

    #[test]
    fn dueling_combination() {
        let net = constant_heads(2.0, &[1.0, -1.0]);
        assert_eq!(net.forward(&[0.3]).unwrap(), vec![3.0, 1.0]);
        let net = constant_heads(0.0, &[0.0, 0.0, 0.0]);
        assert_eq!(net.forward(&[0.3]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = QNetwork::new(shape(true), &mut rng::stream(1, "n"));
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn mean_advantage_identity() {
        let mut r = rng::stream(2, "n");
        for _ in 0..50 {
            let net = QNetwork::new(shape(true), &mut r);
            let s: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let h = net.heads(&s).unwrap();
            let mean_q = h.q.iter().sum::<f64>() / h.q.len() as f64;
            assert!((mean_q - h.value.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn params_round_trip() {
        let mut r = rng::stream(3, "n");
        let a = QNetwork::new(shape(false), &mut r);
        let mut b = QNetwork::new(shape(false), &mut r);
        assert_ne!(a, b);
        b.set_params(&a.params()).unwrap();
        assert_eq!(a, b);
        assert!(b.set_params(&[0.0]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 5.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn zero_error_means_zero_gradient() {
        let net = QNetwork::new(shape(true), &mut rng::stream(4, "n"));
        let s = [0.2, 0.4, 0.9];
        let q = net.forward(&s).unwrap();
        let (loss, grad) = net.loss_and_gradient(&[(&s, 1, q[1])]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(QNetwork::grad_norm(&grad), 0.0);
    }

    #[test]
    fn clipping_bounds_the_step() {
        let mut net = QNetwork::new(shape(true), &mut rng::stream(5, "n"));
        let before = net.params();
        let s = [0.2, 0.4, 0.9];
        let (_, grad) = net.loss_and_gradient(&[(&s, 0, 1e6)]).unwrap();
        assert!(QNetwork::grad_norm(&grad) > 10.0);
        net.apply_gradient(&grad, 1.0, Some(10.0));
        let step: f64 = net
            .params()
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((step - 10.0).abs() < 1e-9, "{step}");
    }
}
