//! Dense ReLU networks: forward evaluation with full traces, exact input
//! gradients, the bias-as-input view, and mini-batch SGD training.
//!
//! Weights are stored row-major with shape `(fan_out, fan_in)`, so row `j` is
//! the weight vector of neuron `j`. The final layer is always `Identity`:
//! outputs are logits and softmax only ever appears inside the training loss.

pub mod io;
mod train;

pub use train::{accuracy, train, EpochStats, Init, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative used by backprop. The ReLU kink at zero gets slope 0,
    /// matching the zero activation there.
    #[inline]
    pub fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// Build a layer from a row-major `fan_out × fan_in` weight buffer.
    pub fn new(
        weights: Vec<f64>,
        bias: Vec<f64>,
        fan_in: usize,
        activation: Activation,
    ) -> Result<Self> {
        let fan_out = bias.len();
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::InvalidNetwork("layer with zero width".into()));
        }
        check_len("layer weights", fan_in * fan_out, weights.len())?;
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            fan_in,
            fan_out,
            weights,
            bias,
            activation,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let fan_in = rows.first().map_or(0, Vec::len);
        check_len("layer rows", bias.len(), rows.len())?;
        for row in rows {
            check_len("layer row", fan_in, row.len())?;
        }
        Self::new(rows.concat(), bias, fan_in, activation)
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weight vector of neuron `j`.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.fan_in..(j + 1) * self.fan_in]
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `z = W x + b`, written into `out`.
    pub fn pre_activation_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.fan_in);
        for (j, z) in out.iter_mut().enumerate() {
            *z = dot(self.row(j), x) + self.bias[j];
        }
    }

    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.fan_out];
        self.pre_activation_into(x, &mut z);
        z
    }

    /// The bias folded into the weights as an extra column, so that the
    /// augmented input `[x; 1]` reproduces `z` unchanged.
    pub fn augment_bias_as_input(&self) -> AugmentedWeights {
        let cols = self.fan_in + 1;
        let mut data = Vec::with_capacity(self.fan_out * cols);
        for j in 0..self.fan_out {
            data.extend_from_slice(self.row(j));
            data.push(self.bias[j]);
        }
        AugmentedWeights {
            rows: self.fan_out,
            cols,
            data,
        }
    }
}

/// Row-major `fan_out × (fan_in + 1)` weights, last column holding the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedWeights {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AugmentedWeights {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `fan_in + 1`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    /// Pre-activation of every neuron for an augmented input `[x; 1]`.
    ///
    /// The constant coordinate is added after the pixel sum, in the same order
    /// as [`DenseLayer::pre_activation`], so both views agree bit for bit.
    pub fn apply(&self, x_aug: &[f64]) -> Result<Vec<f64>> {
        check_len("augmented input", self.cols, x_aug.len())?;
        let n = self.cols - 1;
        Ok((0..self.rows)
            .map(|j| {
                let w = self.row(j);
                dot(&w[..n], &x_aug[..n]) + w[n] * x_aug[n]
            })
            .collect())
    }
}

/// `[x; 1]`.
pub fn augment_input(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(1.0);
    out
}

/// Activations and pre-activations of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.pre_activations.len()
    }

    /// Input fed to layer `l` (`x^{l-1}` in layer numbering starting at 1).
    pub fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }

    pub fn logits(&self) -> &[f64] {
        self.pre_activations
            .last()
            .expect("trace has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidNetwork("no layers".into()))?;
        let input_dim = first.fan_in();
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].fan_in() != pair[0].fan_out() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} has fan_in {} but layer {} has fan_out {}",
                    k + 1,
                    pair[1].fan_in(),
                    k,
                    pair[0].fan_out()
                )));
            }
        }
        if layers.last().map(DenseLayer::activation) != Some(Activation::Identity) {
            return Err(Error::InvalidNetwork(
                "final layer must be Identity (logits)".into(),
            ));
        }
        Ok(Self { input_dim, layers })
    }

    /// Random network with ReLU hidden layers and an Identity output layer.
    /// `sizes` lists every width including input and output, e.g. `[784, 200, 10]`.
    pub fn init(sizes: &[usize], init: Init, seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidNetwork(
                "need at least input and output widths".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weights = match init {
                Init::Glorot => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..fan_in * fan_out)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect()
                }
            };
            let activation = if k + 2 == sizes.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            layers.push(DenseLayer::new(
                weights,
                vec![0.0; fan_out],
                fan_in,
                activation,
            )?);
        }
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::fan_out)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_len("network input", self.input_dim, x.len())?;
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("network input"))
        }
    }

    /// Logits `z^L`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut current = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.pre_activation(&current);
            let act = layer.activation();
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            current = z;
        }
        Ok(current)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &activations[l - 1] };
            let z = layer.pre_activation(input);
            let act = layer.activation();
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre_activations,
            activations,
        })
    }

    /// `∂z^L_target / ∂x⁰` by reverse accumulation through the recorded
    /// ReLU mask. No softmax term is involved.
    pub fn input_gradient(&self, trace: &ForwardTrace, target: usize) -> Result<Vec<f64>> {
        let width = self.output_dim();
        if target >= width {
            return Err(Error::TargetOutOfRange { target, width });
        }
        check_len("trace depth", self.layers.len(), trace.depth())?;
        // Gradient with respect to the pre-activation of the current layer.
        let mut upstream = vec![0.0; width];
        upstream[target] = 1.0;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut below = vec![0.0; layer.fan_in()];
            for (j, &g) in upstream.iter().enumerate() {
                if g != 0.0 {
                    for (b, &w) in below.iter_mut().zip(layer.row(j)) {
                        *b += g * w;
                    }
                }
            }
            if l > 0 {
                let prev = &self.layers[l - 1];
                for (b, &z) in below.iter_mut().zip(&trace.pre_activations[l - 1]) {
                    *b *= prev.activation().slope(z);
                }
            }
            upstream = below;
        }
        Ok(upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_net() -> Mlp {
        let hidden =
            DenseLayer::from_rows(&[vec![1.0], vec![-1.0]], vec![0.0, 0.0], Activation::Relu)
                .unwrap();
        let out =
            DenseLayer::from_rows(&[vec![1.0, 1.0]], vec![0.0], Activation::Identity).unwrap();
        Mlp::new(vec![hidden, out]).unwrap()
    }

    fn linear_net() -> Mlp {
        let layer =
            DenseLayer::from_rows(&[vec![1.0, 2.0]], vec![0.0], Activation::Identity).unwrap();
        Mlp::new(vec![layer]).unwrap()
    }

    #[test]
    fn forward_affine() {
        assert_eq!(linear_net().forward(&[1.0, 1.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn forward_relu_composition() {
        let net = relu_net();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
        let trace = net.forward_trace(&[2.0]).unwrap();
        assert_eq!(trace.pre_activations[0], vec![2.0, -2.0]);
        assert_eq!(trace.activations[0], vec![2.0, 0.0]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let net = Mlp::init(&[5, 4, 3], Init::Glorot, 1).unwrap();
        assert_eq!(net.forward(&[0.0; 5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_trace_has_equal_pair() {
        let trace = linear_net().forward_trace(&[0.5, -1.5]).unwrap();
        assert_eq!(trace.depth(), 1);
        assert_eq!(trace.pre_activations[0], trace.activations[0]);
    }

    #[test]
    fn trace_is_deterministic_and_matches_forward() {
        let net = Mlp::init(&[7, 6, 3], Init::Glorot, 3).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = net.forward_trace(&x).unwrap();
        let b = net.forward_trace(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.logits(), net.forward(&x).unwrap().as_slice());
    }

    #[test]
    fn gradient_examples() {
        let lin = linear_net();
        let t = lin.forward_trace(&[-4.0, 9.0]).unwrap();
        assert_eq!(lin.input_gradient(&t, 0).unwrap(), vec![1.0, 2.0]);

        let net = relu_net();
        let t = net.forward_trace(&[2.0]).unwrap();
        assert_eq!(net.input_gradient(&t, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = linear_net();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.forward(&[1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        let t = net.forward_trace(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            net.input_gradient(&t, 1),
            Err(Error::TargetOutOfRange {
                target: 1,
                width: 1
            })
        ));
    }

    #[test]
    fn network_validation() {
        let a = DenseLayer::from_rows(&[vec![1.0, 2.0]], vec![0.0], Activation::Relu).unwrap();
        assert!(Mlp::new(vec![a.clone()]).is_err(), "final ReLU rejected");
        let b = DenseLayer::from_rows(&[vec![1.0, 2.0]], vec![0.0], Activation::Identity).unwrap();
        assert!(Mlp::new(vec![a, b]).is_err(), "fan mismatch rejected");
        assert!(DenseLayer::new(vec![1.0], vec![0.0, 0.0], 1, Activation::Relu).is_err());
        assert!(DenseLayer::new(vec![f64::INFINITY], vec![0.0], 1, Activation::Relu).is_err());
    }

    #[test]
    fn augmentation_examples() {
        let layer =
            DenseLayer::from_rows(&[vec![1.0, 2.0]], vec![3.0], Activation::Identity).unwrap();
        let aug = layer.augment_bias_as_input();
        assert_eq!(aug.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(augment_input(&[4.0, 5.0]), vec![4.0, 5.0, 1.0]);
        assert_eq!(
            aug.apply(&[4.0, 5.0, 1.0]).unwrap(),
            layer.pre_activation(&[4.0, 5.0])
        );

        let zero_bias =
            DenseLayer::from_rows(&[vec![0.5, -2.0]], vec![0.0], Activation::Relu).unwrap();
        let aug = zero_bias.augment_bias_as_input();
        assert_eq!(aug.row(0)[2], 0.0);
        assert_eq!(
            aug.apply(&[0.1, 0.7, 1.0]).unwrap(),
            zero_bias.pre_activation(&[0.1, 0.7])
        );
    }
}
