//! Dense multilayer perceptron with analytic backpropagation.
//!
//! The last layer is the linear head `f`; every layer before it forms the
//! backbone `Φ`. Weights are stored row-major with shape `(out, in)`.

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) activation: Activation,
    pub(crate) weight: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be positive".into()));
        }
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            activation,
            weight,
            bias,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let weight = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            in_dim,
            out_dim,
            activation,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `x W^T + b`, before the activation.
    fn affine(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        for r in 0..x.rows() {
            let xr = x.row(r);
            let orow = out.row_mut(r);
            for (o, (wrow, b)) in orow
                .iter_mut()
                .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
            {
                *o = b + dot(wrow, xr);
            }
        }
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-parameter gradients, shape-congruent with a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|&v| v == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Flat views over every parameter tensor, in layer order (weight, bias).
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

/// Activations recorded by [`Network::forward_traced`], consumed by
/// [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
    logits: Matrix,
}

impl Trace {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    /// Output of the backbone: input of the head layer.
    pub fn embedding(&self) -> &Matrix {
        self.inputs.last().expect("trace has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) layers: Vec<Dense>,
}

impl Network {
    /// Assembles a network, checking that layer dimensions chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// ReLU MLP `feature_dim -> hidden... -> class_count` with a linear head.
    pub fn mlp<R: Rng + ?Sized>(feature_dim: usize, hidden: &[usize], class_count: usize, rng: &mut R) -> Result<Self> {
        if feature_dim == 0 || class_count == 0 || hidden.contains(&0) {
            return Err(Error::Shape("all layer widths must be positive".into()));
        }
        let mut dims = vec![feature_dim];
        dims.extend_from_slice(hidden);
        dims.push(class_count);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Dense::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn class_count(&self) -> usize {
        self.head().out_dim
    }

    /// Width of the backbone output (`feature_dim` for a head-only net).
    pub fn embedding_dim(&self) -> usize {
        self.head().in_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn head(&self) -> &Dense {
        self.layers.last().expect("non-empty")
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        self.layers.last_mut().expect("non-empty")
    }

    /// Layer dimensions `[in, hidden..., out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.feature_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.cols(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&h);
            apply(layer.activation, &mut z);
            h = z;
        }
        Ok(h)
    }

    /// Backbone output `Φ(x)`.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = layer.affine(&h);
            apply(layer.activation, &mut z);
            h = z;
        }
        Ok(h)
    }

    /// The head as a standalone single-layer network.
    pub fn head_network(&self) -> Network {
        Network {
            layers: vec![self.head().clone()],
        }
    }

    pub fn forward_traced(&self, x: &Matrix) -> Result<Trace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let z = layer.affine(&h);
            let mut a = z.clone();
            apply(layer.activation, &mut a);
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(Trace { inputs, pre, logits: h })
    }

    /// Gradients of a scalar loss given `upstream = dLoss/dLogits`.
    pub fn backward(&self, trace: &Trace, upstream: &Matrix) -> Result<Gradients> {
        if trace.inputs.len() != self.layers.len()
            || trace.pre.iter().zip(&self.layers).any(|(z, l)| z.cols() != l.out_dim)
        {
            return Err(Error::State("activation trace does not belong to this network".into()));
        }
        if upstream.rows() != trace.logits.rows() || upstream.cols() != self.class_count() {
            return Err(Error::Shape(format!(
                "upstream gradient is {}x{}, logits are {}x{}",
                upstream.rows(),
                upstream.cols(),
                trace.logits.rows(),
                trace.logits.cols()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                let z = &trace.pre[k];
                for (d, &zv) in delta.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &trace.inputs[k];
            let g = &mut grads.layers[k];
            for r in 0..delta.rows() {
                let dr = delta.row(r);
                let xr = input.row(r);
                for (o, &dv) in dr.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g.bias[o] += dv;
                    let wrow = &mut g.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (w, &xv) in wrow.iter_mut().zip(xr) {
                        *w += dv * xv;
                    }
                }
            }
            if k > 0 {
                let mut next = Matrix::zeros(delta.rows(), layer.in_dim);
                for r in 0..delta.rows() {
                    let dr = delta.row(r);
                    let nr = next.row_mut(r);
                    for (o, &dv) in dr.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        let wrow = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (n, &w) in nr.iter_mut().zip(wrow) {
                            *n += dv * w;
                        }
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Mutable flat views over every parameter tensor, matching
    /// [`Gradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Order-sensitive checksum over the exact bits of the backbone parameters.
    pub fn backbone_checksum(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in &self.layers[..self.layers.len() - 1] {
            for v in layer.weight.iter().chain(&layer.bias) {
                hash ^= v.to_bits();
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}

fn apply(act: Activation, z: &mut Matrix) {
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for v in z.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_network_gives_zero_logits() {
        let layers = vec![
            Dense::new(3, 4, Activation::Relu, vec![0.0; 12], vec![0.0; 4]).unwrap(),
            Dense::new(4, 2, Activation::Identity, vec![0.0; 8], vec![0.0; 2]).unwrap(),
        ];
        let net = Network::from_layers(layers).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.3, 0.2, -9.0]]);
        let out = net.forward(&x).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let id = Dense::new(2, 2, Activation::Identity, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        let net = Network::from_layers(vec![id]).unwrap();
        let out = net.forward(&Matrix::from_rows(&[[1.0, -1.0]])).unwrap();
        assert_eq!(out.row(0), &[1.0, -1.0]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = Network::mlp(4, &[3], 2, &mut rng::stream(1, "t")).unwrap();
        let err = net.forward(&Matrix::zeros(1, 5)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rejects_unchained_layers() {
        let a = Dense::new(3, 4, Activation::Relu, vec![0.0; 12], vec![0.0; 4]).unwrap();
        let b = Dense::new(5, 2, Activation::Identity, vec![0.0; 10], vec![0.0; 2]).unwrap();
        assert!(matches!(Network::from_layers(vec![a, b]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::mlp(4, &[5, 3], 3, &mut rng::stream(2, "t")).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3, 0.9], [1.0, -1.0, 0.5, 0.0]]);
        let trace = net.forward_traced(&x).unwrap();
        let g = net.backward(&trace, &Matrix::zeros(2, 3)).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn single_layer_weight_gradient_is_outer_product() {
        let mut r = rng::stream(3, "t");
        let net = Network::mlp(3, &[], 2, &mut r).unwrap();
        let x = Matrix::from_rows(&[[0.5, -1.5, 2.0]]);
        let up = Matrix::from_rows(&[[0.25, -4.0]]);
        let trace = net.forward_traced(&x).unwrap();
        let g = net.backward(&trace, &up).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.layers[0].weight[o * 3 + i], up.get(0, o) * x.get(0, i));
            }
            assert_eq!(g.layers[0].bias[o], up.get(0, o));
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let mut r = rng::stream(4, "t");
        let a = Network::mlp(3, &[4], 2, &mut r).unwrap();
        let b = Network::mlp(3, &[5, 6], 2, &mut r).unwrap();
        let trace = a.forward_traced(&Matrix::zeros(1, 3)).unwrap();
        let err = b.backward(&trace, &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn head_network_matches_full_forward_on_embeddings() {
        let net = Network::mlp(4, &[6], 3, &mut rng::stream(5, "t")).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.7, 1.1, 0.2]]);
        let emb = net.embed(&x).unwrap();
        let via_head = net.head_network().forward(&emb).unwrap();
        assert_eq!(via_head, net.forward(&x).unwrap());
    }
}
