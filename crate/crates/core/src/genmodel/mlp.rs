//! Dense multilayer perceptron with hand-derived backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Linear => v,
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activated value `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// outputs × inputs, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations of every layer (index 0 is the input) for one sample.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub activations: Vec<Vec<f64>>,
    /// Last layer output before its activation.
    pub logits: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` includes input and output widths.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(
            sizes.len() >= 2 && sizes.iter().all(|&s| s > 0),
            "invalid layer sizes"
        );
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; fan_out],
                    activation: if i == last { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Checks that consecutive layer widths agree.
    pub fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs)
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let mut logits = Vec::new();
        for layer in &self.layers {
            let input = activations.last().unwrap();
            logits = (0..layer.outputs)
                .map(|o| {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    layer.bias[o] + row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let out = logits.iter().map(|&z| layer.activation.apply(z)).collect();
            activations.push(out);
        }
        MlpCache {
            activations,
            logits,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).activations.pop().unwrap()
    }

    /// Output of the last layer before its activation.
    pub fn forward_preactivation(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).logits
    }

    pub fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    /// Backpropagates one sample, accumulating parameter gradients into `grads`
    /// and returning the gradient with respect to the input.
    ///
    /// `upstream` is the loss gradient with respect to the activated output, or
    /// with respect to the last pre-activation when `upstream_is_preactivation`.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &[f64],
        upstream_is_preactivation: bool,
        grads: &mut [LayerGrad],
    ) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta: Vec<f64> = if upstream_is_preactivation {
            upstream.to_vec()
        } else {
            let act = &cache.activations[n];
            let f = self.layers[n - 1].activation;
            upstream
                .iter()
                .zip(act)
                .map(|(g, a)| g * f.derivative(*a))
                .collect()
        };
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            let input = &cache.activations[li];
            let g = &mut grads[li];
            for o in 0..layer.outputs {
                let d = delta[o];
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, v) in row.iter_mut().zip(input) {
                    *gw += d * v;
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            if li > 0 {
                let f = self.layers[li - 1].activation;
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= f.derivative(*a);
                }
            }
            delta = prev;
        }
        delta
    }

    /// All parameters, layer by layer (weights then bias).
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("parameter vector too short");
            }
        }
    }

    pub fn flatten_grads(grads: &[LayerGrad]) -> Vec<f64> {
        grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
            .collect()
    }
}

/// Plain momentum SGD: `v ← μ·v − η·g; θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct MomentumSgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<LayerGrad>,
}

impl MomentumSgd {
    pub fn new(net: &Mlp, learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: net.zero_grads(),
        }
    }

    /// Applies `grads` scaled by `scale` (e.g. 1/batch).
    pub fn step(&mut self, net: &mut Mlp, grads: &[LayerGrad], scale: f64) {
        for ((layer, g), v) in net.layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((w, gw), vw) in layer.weights.iter_mut().zip(&g.weights).zip(&mut v.weights) {
                *vw = self.momentum * *vw - self.learning_rate * gw * scale;
                *w += *vw;
            }
            for ((b, gb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
                *vb = self.momentum * *vb - self.learning_rate * gb * scale;
                *b += *vb;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn shapes_chain() {
        let mut rng = RngStream::new(1, 0);
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Linear, &mut rng);
        assert!(net.is_consistent() && net.is_finite());
        assert_eq!(net.forward(&[0.1, 0.2, 0.3]).len(), 2);
        assert_eq!(net.params().len(), 3 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = RngStream::new(2, 0);
        let mut net = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Sigmoid, &mut rng);
        let p: Vec<f64> = (0..net.params().len()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&p);
        assert_eq!(net.params(), p);
    }

    #[test]
    fn preactivation_matches_sigmoid_output() {
        let mut rng = RngStream::new(3, 0);
        let net = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Sigmoid, &mut rng);
        let x = [0.3, -0.7];
        assert!((sigmoid(net.forward_preactivation(&x)[0]) - net.forward(&x)[0]).abs() < 1e-15);
    }

    #[test]
    fn momentum_descends_quadratic() {
        // single linear unit fitting y = 2x
        let mut net = Mlp {
            layers: vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.0],
                bias: vec![0.0],
                activation: Activation::Linear,
            }],
        };
        let mut opt = MomentumSgd::new(&net, 0.05, 0.9);
        for _ in 0..300 {
            let mut g = net.zero_grads();
            for x in [-1.0, 0.5, 1.0] {
                let c = net.forward_cached(&[x]);
                net.backward(&c, &[c.output()[0] - 2.0 * x], false, &mut g);
            }
            opt.step(&mut net, &g, 1.0 / 3.0);
        }
        assert!((net.layers[0].weights[0] - 2.0).abs() < 1e-3);
    }
}
