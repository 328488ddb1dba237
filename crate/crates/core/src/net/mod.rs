//! Dense feed-forward networks with exact input jets and parameter gradients.

pub mod jet;
pub mod optim;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::{Error, Result};
use jet::{JetBatch, JetOrder};

pub use optim::{AdamConfig, OptimizerState, PlateauConfig};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sin,
}

impl Activation {
    /// `[f, f', f'', f''']` at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)]
            }
            Activation::Sin => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Sin => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Sin),
            _ => None,
        }
    }
}

/// One affine layer. Weights are row-major `(outputs x inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// A fully connected network. Hidden layers use `activation`; the last layer
/// is linear unless `activate_output` is set (input sub-networks that feed a
/// downstream net keep the activation of the layer they were cut from).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
    activation: Activation,
    activate_output: bool,
}

/// Intermediate jets kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct DenseTape {
    inputs: Vec<JetBatch>,
    pre: Vec<JetBatch>,
}

/// Value, input gradient and input Hessian of one network output at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalJet {
    pub value: f64,
    pub d_input: Vec<f64>,
    pub d2_input: Vec<Vec<f64>>,
}

impl EvalJet {
    /// Builds a jet from an output unit of a batch at point `p`.
    pub fn from_batch(batch: &JetBatch, unit: usize, p: usize) -> Self {
        let dim = batch.dim();
        let value = batch.get(unit, 0, p);
        let d_input = if batch.order() >= JetOrder::First {
            (0..dim).map(|i| batch.get(unit, 1 + i, p)).collect()
        } else {
            Vec::new()
        };
        let d2_input = if batch.order() == JetOrder::Second {
            (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| batch.get(unit, jet::pair_component(dim, i, j), p))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            value,
            d_input,
            d2_input,
        }
    }

    pub fn has_second(&self) -> bool {
        !self.d2_input.is_empty()
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least input and output sizes, got {sizes:?}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases, deterministic in `seed`.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                Dense {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| dist.sample(&mut rng)).collect(),
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
            activate_output: false,
        })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
            activate_output: false,
        })
    }

    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation, activate_output: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut sizes = vec![layers[0].inputs];
        for (l, layer) in layers.iter().enumerate() {
            if layer.inputs != *sizes.last().unwrap()
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Config(format!("layer {l} has inconsistent shape")));
            }
            sizes.push(layer.outputs);
        }
        check_sizes(&sizes)?;
        Ok(Self {
            sizes,
            layers,
            activation,
            activate_output,
        })
    }

    pub fn with_activated_output(mut self, on: bool) -> Self {
        self.activate_output = on;
        self
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    fn is_activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.activate_output
    }

    /// Parameter range of each layer inside the flat vector (weights first, then biases).
    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let r = offset..offset + l.num_params();
                offset = r.end;
                r
            })
            .collect()
    }

    /// Splits into the first `depth` layers and the rest.
    pub fn split_at(&self, depth: usize) -> Result<(DenseNet, DenseNet)> {
        if depth == 0 || depth >= self.layers.len() {
            return Err(Error::Config(format!(
                "split depth {depth} out of range 1..{}",
                self.layers.len()
            )));
        }
        let head = DenseNet::from_layers(self.layers[..depth].to_vec(), self.activation, true)?;
        let tail = DenseNet::from_layers(
            self.layers[depth..].to_vec(),
            self.activation,
            self.activate_output,
        )?;
        Ok((head, tail))
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::InputShape {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// Plain evaluation at one input point.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let out = self.eval_jets(&JetBatch::seed(x, x.len(), JetOrder::Value))?;
        Ok((0..self.output_dim()).map(|u| out.get(u, 0, 0)).collect())
    }

    /// Value and exact first/second input derivatives of output `out_index`.
    pub fn forward_jet(&self, x: &[f64], out_index: usize) -> Result<EvalJet> {
        self.check_input(x.len())?;
        if out_index >= self.output_dim() {
            return Err(Error::InputShape {
                expected: self.output_dim(),
                got: out_index,
            });
        }
        let out = self.eval_jets(&JetBatch::seed(x, x.len(), JetOrder::Second))?;
        if !out.is_finite() {
            return Err(Error::NumericOverflow {
                context: format!("forward_jet at {x:?}"),
            });
        }
        Ok(EvalJet::from_batch(&out, out_index, 0))
    }

    /// Jet propagation without keeping a tape.
    pub fn eval_jets(&self, input: &JetBatch) -> Result<JetBatch> {
        self.check_input(input.width())?;
        let mut a = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = jet::linear_forward(&layer.weights, &layer.biases, &a);
            a = if self.is_activated(l) {
                jet::activation_forward(self.activation, &z)
            } else {
                z
            };
        }
        Ok(a)
    }

    /// Jet propagation keeping every intermediate for [`DenseNet::backward_jets`].
    pub fn forward_jets(&self, input: &JetBatch) -> Result<(JetBatch, DenseTape)> {
        self.check_input(input.width())?;
        let mut tape = DenseTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut a = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = jet::linear_forward(&layer.weights, &layer.biases, &a);
            let next = if self.is_activated(l) {
                jet::activation_forward(self.activation, &z)
            } else {
                z.clone()
            };
            tape.inputs.push(std::mem::replace(&mut a, next));
            tape.pre.push(z);
        }
        Ok((a, tape))
    }

    /// Reverse pass: accumulates the parameter gradient into `grad` (flat
    /// layout of [`DenseNet::layer_ranges`]) and optionally returns the
    /// adjoint of the input jet.
    pub fn backward_jets(
        &self,
        tape: &DenseTape,
        out_adj: &JetBatch,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<JetBatch> {
        debug_assert_eq!(grad.len(), self.num_params());
        let ranges = self.layer_ranges();
        let mut adj = out_adj.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let z_adj = if self.is_activated(l) {
                jet::activation_backward(self.activation, &tape.pre[l], &adj)
            } else {
                adj
            };
            let (gw, gb) = grad[ranges[l].clone()].split_at_mut(layer.weights.len());
            let need = l > 0 || want_input;
            match jet::linear_backward(&layer.weights, &tape.inputs[l], &z_adj, gw, gb, need) {
                Some(a_adj) => adj = a_adj,
                None => return None,
            }
        }
        Some(adj)
    }

    /// Flattened parameters with one block per layer.
    pub fn params(&self) -> ParamVector {
        let mut values = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            values.extend_from_slice(&layer.weights);
            values.extend_from_slice(&layer.biases);
        }
        let blocks = self
            .layer_ranges()
            .into_iter()
            .enumerate()
            .map(|(l, range)| ParamBlock {
                label: format!("layer{l}"),
                range,
            })
            .collect();
        ParamVector { values, blocks }
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::InputShape {
                expected: self.num_params(),
                got: values.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&values[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&values[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Mean absolute weight (biases excluded) of each layer.
    pub fn layer_group_magnitudes(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w.abs()).sum::<f64>() / l.weights.len() as f64)
            .collect()
    }
}

/// A flat view of trainable scalars with named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub blocks: Vec<ParamBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub label: String,
    pub range: Range<usize>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, label: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.label == label)
            .map(|b| &self.values[b.range.clone()])
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != self.values.len() {
            return Err(Error::InputShape {
                expected: self.values.len(),
                got: values.len(),
            });
        }
        Ok(ParamVector {
            values,
            blocks: self.blocks.clone(),
        })
    }
}

/// Per-layer freeze flags for a [`DenseNet`]; frozen layers receive no update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub frozen: Vec<bool>,
}

impl FreezeMask {
    pub fn none(layers: usize) -> Self {
        Self {
            frozen: vec![false; layers],
        }
    }

    pub fn all(layers: usize) -> Self {
        Self {
            frozen: vec![true; layers],
        }
    }

    pub fn only(layers: usize, frozen_layers: &[usize]) -> Self {
        let mut m = Self::none(layers);
        for &l in frozen_layers {
            if l < layers {
                m.frozen[l] = true;
            }
        }
        m
    }

    /// Expands to one `trainable` flag per parameter.
    pub fn trainable(&self, net: &DenseNet) -> Result<Vec<bool>> {
        if self.frozen.len() != net.num_layers() {
            return Err(Error::Contract(format!(
                "freeze mask has {} flags for {} layers",
                self.frozen.len(),
                net.num_layers()
            )));
        }
        let mut out = vec![true; net.num_params()];
        for (range, &frozen) in net.layer_ranges().into_iter().zip(&self.frozen) {
            if frozen {
                out[range].fill(false);
            }
        }
        Ok(out)
    }
}

/// A differentiable model mapping seeded coordinate jets to output jets.
///
/// The flat parameter layout returned by `param_values` is the one used by
/// `backward` for gradient accumulation.
pub trait Surrogate: Sync {
    type Tape: Send;

    fn input_dim(&self) -> usize;
    fn num_params(&self) -> usize;
    fn eval(&self, input: &JetBatch) -> Result<JetBatch>;
    fn forward(&self, input: &JetBatch) -> Result<(JetBatch, Self::Tape)>;
    fn backward(&self, tape: &Self::Tape, out_adj: &JetBatch, grad: &mut [f64]);
    fn param_values(&self) -> Vec<f64>;
    fn set_param_values(&mut self, values: &[f64]) -> Result<()>;
}

impl Surrogate for DenseNet {
    type Tape = DenseTape;

    fn input_dim(&self) -> usize {
        DenseNet::input_dim(self)
    }

    fn num_params(&self) -> usize {
        DenseNet::num_params(self)
    }

    fn eval(&self, input: &JetBatch) -> Result<JetBatch> {
        self.eval_jets(input)
    }

    fn forward(&self, input: &JetBatch) -> Result<(JetBatch, DenseTape)> {
        self.forward_jets(input)
    }

    fn backward(&self, tape: &DenseTape, out_adj: &JetBatch, grad: &mut [f64]) {
        self.backward_jets(tape, out_adj, grad, false);
    }

    fn param_values(&self) -> Vec<f64> {
        self.params().values
    }

    fn set_param_values(&mut self, values: &[f64]) -> Result<()> {
        self.set_params(values)
    }
}

/// A scalar objective with an exact gradient.
pub trait DifferentiableLoss {
    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Exact gradient of `loss` at `theta`; entries not flagged `trainable` are 0.
pub fn param_gradient<L: DifferentiableLoss + ?Sized>(
    loss: &L,
    theta: &ParamVector,
    trainable: Option<&[bool]>,
) -> Result<ParamVector> {
    let (value, mut grad) = loss.value_and_gradient(&theta.values)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss {
            term: "total",
            point: Vec::new(),
        });
    }
    if let Some(mask) = trainable {
        if mask.len() != grad.len() {
            return Err(Error::InputShape {
                expected: grad.len(),
                got: mask.len(),
            });
        }
        for (g, &t) in grad.iter_mut().zip(mask) {
            if !t {
                *g = 0.0;
            }
        }
    }
    theta.with_values(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64) -> DenseNet {
        DenseNet::from_layers(
            vec![Dense {
                inputs: 1,
                outputs: 1,
                weights: vec![w],
                biases: vec![b],
            }],
            Activation::Tanh,
            false,
        )
        .unwrap()
    }

    #[test]
    fn affine_single_layer() {
        assert_eq!(single(3.0, 1.0).forward(&[2.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 8, 8, 2], Activation::Tanh).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = DenseNet::new(&[2, 16, 16, 1], Activation::Tanh, 9).unwrap();
        let a = net.forward(&[0.1, 0.7]).unwrap();
        let b = net.forward(&[0.1, 0.7]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn input_shape_error() {
        let net = DenseNet::new(&[2, 4, 1], Activation::Tanh, 1).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::InputShape { expected: 2, got: 1 })
        ));
        assert!(net.forward_jet(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn tanh_jet_at_origin() {
        // u(x) = tanh(2x) as a hidden unit followed by an identity readout.
        let net = DenseNet::from_layers(
            vec![
                Dense {
                    inputs: 1,
                    outputs: 1,
                    weights: vec![2.0],
                    biases: vec![0.0],
                },
                Dense {
                    inputs: 1,
                    outputs: 1,
                    weights: vec![1.0],
                    biases: vec![0.0],
                },
            ],
            Activation::Tanh,
            false,
        )
        .unwrap();
        let jet = net.forward_jet(&[0.0], 0).unwrap();
        assert_eq!(jet.value, 0.0);
        assert_eq!(jet.d_input, vec![2.0]);
        assert_eq!(jet.d2_input, vec![vec![0.0]]);
    }

    #[test]
    fn constant_function_has_zero_derivatives() {
        let mut net = DenseNet::new(&[2, 6, 6, 1], Activation::Tanh, 4).unwrap();
        net.layers_mut()[0].weights.fill(0.0);
        let jet = net.forward_jet(&[0.4, -0.2], 0).unwrap();
        assert!(jet.d_input.iter().all(|&v| v == 0.0));
        assert!(jet.d2_input.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_round_trip() {
        let net = DenseNet::new(&[2, 5, 3, 1], Activation::Sin, 2).unwrap();
        let p = net.params();
        let mut other = DenseNet::zeros(&[2, 5, 3, 1], Activation::Sin).unwrap();
        other.set_params(&p.values).unwrap();
        assert_eq!(net, other);
        assert_eq!(p.blocks.len(), 3);
        assert_eq!(p.block("layer1").unwrap().len(), 5 * 3 + 3);
    }

    #[test]
    fn layer_magnitudes() {
        let mut net = DenseNet::zeros(&[1, 2, 1], Activation::Tanh).unwrap();
        assert_eq!(net.layer_group_magnitudes(), vec![0.0, 0.0]);
        net.layers_mut()[0].weights = vec![1.0, -3.0];
        net.layers_mut()[1].weights = vec![-0.5, -0.5];
        net.layers_mut()[1].biases = vec![100.0];
        assert_eq!(net.layer_group_magnitudes(), vec![2.0, 0.5]);
    }

    #[test]
    fn split_shapes_and_composition() {
        let net = DenseNet::new(&[2, 10, 10, 10, 1], Activation::Tanh, 3).unwrap();
        let (head, tail) = net.split_at(1).unwrap();
        assert_eq!(head.sizes(), &[2, 10]);
        assert_eq!(tail.sizes(), &[10, 10, 10, 1]);
        let x = [0.3, -0.9];
        let h = head.forward(&x).unwrap();
        assert_eq!(tail.forward(&h).unwrap(), net.forward(&x).unwrap());
        assert!(net.split_at(0).is_err());
        assert!(net.split_at(4).is_err());
    }

    struct HalfSquaredNorm;

    impl DifferentiableLoss for HalfSquaredNorm {
        fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = 0.5 * params.iter().map(|p| p * p).sum::<f64>();
            Ok((v, params.to_vec()))
        }
    }

    #[test]
    fn quadratic_gradient_is_identity() {
        let net = DenseNet::new(&[2, 3, 1], Activation::Tanh, 5).unwrap();
        let theta = net.params();
        let g = param_gradient(&HalfSquaredNorm, &theta, None).unwrap();
        assert_eq!(g.values, theta.values);
        let frozen = FreezeMask::all(2).trainable(&net).unwrap();
        let g = param_gradient(&HalfSquaredNorm, &theta, Some(&frozen)).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }
}
