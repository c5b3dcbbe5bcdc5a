//! Fully connected feature encoder placed in front of the MTLR head.
//!
//! The input is the concatenation of the clinical feature vector and an
//! optional precomputed image feature vector. Layers are affine maps followed
//! by ReLU or identity; gradients are computed by hand-written reverse mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, sum_squares};

/// Clinical features with an optional image-feature block appended.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedInput {
    pub clinical: Vec<f64>,
    pub image_features: Option<Vec<f64>>,
}

impl FusedInput {
    pub fn new(clinical: Vec<f64>, image_features: Option<Vec<f64>>) -> Self {
        FusedInput {
            clinical,
            image_features,
        }
    }

    pub fn len(&self) -> usize {
        self.clinical.len() + self.image_features.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `clinical || image_features`.
    pub fn fused(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.clinical);
        if let Some(img) = &self.image_features {
            v.extend_from_slice(img);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    // subgradient of ReLU at 0 is taken as 0
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `act(W x + b)`; `W` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::DimensionMismatch {
                expected: in_dim * out_dim,
                got: weights.len(),
                context: "layer weights",
            });
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                got: bias.len(),
                context: "layer bias",
            });
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    /// Square identity-weight layer with zero bias.
    pub fn identity(dim: usize, activation: Activation) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Layer {
            in_dim: dim,
            out_dim: dim,
            weights,
            bias: vec![0.0; dim],
            activation,
        }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let d = self.in_dim;
        self.bias
            .iter()
            .enumerate()
            .map(|(o, b)| dot(&self.weights[o * d..(o + 1) * d], x) + b)
            .collect()
    }

    fn zeroed(&self) -> Layer {
        Layer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
            activation: self.activation,
        }
    }
}

/// Stack of affine layers. With no layers the encoder is the identity map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EncoderRepr", into = "EncoderRepr")]
pub struct EncoderNet {
    input_dim: usize,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct EncoderRepr {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl TryFrom<EncoderRepr> for EncoderNet {
    type Error = Error;

    fn try_from(r: EncoderRepr) -> Result<Self> {
        for layer in &r.layers {
            Layer::new(layer.in_dim, layer.out_dim, layer.weights.clone(), layer.bias.clone(), layer.activation)?;
        }
        EncoderNet::new(r.input_dim, r.layers)
    }
}

impl From<EncoderNet> for EncoderRepr {
    fn from(n: EncoderNet) -> Self {
        EncoderRepr {
            input_dim: n.input_dim,
            layers: n.layers,
        }
    }
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer, plus the final output as the last entry.
    activations: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }

    /// Distance of the closest ReLU pre-activation to the kink at zero.
    pub fn relu_margin(&self, net: &EncoderNet) -> f64 {
        net.layers
            .iter()
            .zip(&self.pre_activations)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl EncoderNet {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut dim = input_dim;
        for layer in &layers {
            if layer.in_dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: layer.in_dim,
                    context: "consecutive encoder layers",
                });
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("encoder parameters must be finite".into()));
            }
            dim = layer.out_dim;
        }
        Ok(EncoderNet { input_dim, layers })
    }

    /// Passthrough encoder with no parameters.
    pub fn identity(dim: usize) -> Self {
        EncoderNet {
            input_dim: dim,
            layers: Vec::new(),
        }
    }

    /// ReLU layers with the given sizes, `dims[0]` being the input width.
    ///
    /// Weights are drawn from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))` and
    /// biases start at zero.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("encoder needs at least an input size".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], Activation::Relu)
            })
            .collect::<Result<Vec<_>>>()?;
        EncoderNet::new(dims[0], layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn is_identity(&self) -> bool {
        self.layers.is_empty()
    }

    /// Number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_penalty(&self) -> f64 {
        self.layers.iter().map(|l| sum_squares(&l.weights)).sum()
    }

    /// Same shape, all parameters zero; used to accumulate gradients.
    pub fn zeros_like(&self) -> EncoderNet {
        EncoderNet {
            input_dim: self.input_dim,
            layers: self.layers.iter().map(Layer::zeroed).collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
                context: "encoder input",
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer
                .pre_activation(&h)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(h)
    }

    pub fn forward_fused(&self, input: &FusedInput) -> Result<Vec<f64>> {
        self.forward(&input.fused())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.pre_activation(activations.last().unwrap());
            activations.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
            pre_activations.push(z);
        }
        Ok(ForwardTrace {
            activations,
            pre_activations,
        })
    }

    /// Reverse-mode pass. Adds the parameter gradient into `param_grad`
    /// (which must be shaped like `self`) and returns the input gradient.
    pub fn backward_accumulate(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        param_grad: &mut EncoderNet,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
                context: "encoder upstream gradient",
            });
        }
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_activations[l];
            let input = &trace.activations[l];
            for (dv, &zv) in delta.iter_mut().zip(z) {
                *dv *= layer.activation.derivative(zv);
            }
            let grad_layer = &mut param_grad.layers[l];
            for (o, &dv) in delta.iter().enumerate() {
                grad_layer.bias[o] += dv;
                let row = &mut grad_layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, &xi) in row.iter_mut().zip(input) {
                    *w += dv * xi;
                }
            }
            let mut next = vec![0.0; layer.in_dim];
            for (o, &dv) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += dv * w;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Gradients of `upstream . f(x)` with respect to the input and to every
    /// parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, EncoderNet)> {
        let trace = self.forward_trace(x)?;
        let mut grad = self.zeros_like();
        let input_grad = self.backward_accumulate(&trace, upstream, &mut grad)?;
        Ok((input_grad, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let net = EncoderNet::new(3, vec![Layer::identity(3, Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[-1.0, 0.5, 2.0]).unwrap(), vec![-1.0, 0.5, 2.0]);
        assert_eq!(EncoderNet::identity(2).forward(&[4.0, -4.0]).unwrap(), vec![4.0, -4.0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let net = EncoderNet::new(2, vec![Layer::identity(2, Activation::Relu)]).unwrap();
        assert_eq!(net.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn fused_input_concatenates() {
        let f = FusedInput::new(vec![1.0, 2.0], Some(vec![3.0]));
        assert_eq!(f.fused(), vec![1.0, 2.0, 3.0]);
        assert_eq!(FusedInput::new(vec![1.0], None).fused(), vec![1.0]);
    }

    #[test]
    fn identity_weight_gradient_is_outer_product() {
        let net = EncoderNet::new(2, vec![Layer::identity(2, Activation::Identity)]).unwrap();
        let x = [0.5, -1.5];
        let up = [2.0, 3.0];
        let (gx, gp) = net.backward(&x, &up).unwrap();
        assert_eq!(gx, vec![2.0, 3.0]);
        assert_eq!(gp.layers[0].weights, vec![1.0, -3.0, 1.5, -4.5]);
        assert_eq!(gp.layers[0].bias, vec![2.0, 3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = EncoderNet::init(&[3, 4, 2], 5).unwrap();
        let (gx, gp) = net.backward(&[0.1, 0.2, -0.3], &[0.0, 0.0]).unwrap();
        assert!(gx.iter().all(|&g| g == 0.0));
        assert!(gp.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|&g| g == 0.0)));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = EncoderNet::init(&[4, 8, 8], 11).unwrap();
        let b = EncoderNet::init(&[4, 8, 8], 11).unwrap();
        let c = EncoderNet::init(&[4, 8, 8], 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers[0].weights, c.layers[0].weights);
        for layer in a.layers() {
            let bound = (6.0 / layer.in_dim as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.output_dim(), 8);
        assert!(EncoderNet::init(&[], 0).is_err());
    }

    #[test]
    fn dimension_errors() {
        let net = EncoderNet::init(&[3, 2], 0).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        let bad = vec![Layer::identity(3, Activation::Relu), Layer::identity(2, Activation::Relu)];
        assert!(EncoderNet::new(3, bad).is_err());
    }
}
