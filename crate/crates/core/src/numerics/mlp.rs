use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{glorot_uniform, join, Parameters};
use super::Tensor2;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, t: &mut Tensor2) {
        if self == Activation::Relu {
            t.data_mut().iter_mut().for_each(|x| {
                if *x < 0.0 {
                    *x = 0.0
                }
            });
        }
    }

    /// Multiplies `grad` by the derivative, evaluated from the activation output.
    fn backprop(self, output: &Tensor2, grad: &mut Tensor2) {
        if self == Activation::Relu {
            for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// ReLU hidden layers, identity output.
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!("MLP dims must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `(in, out)`.
    pub weight: Tensor2,
    /// `(1, out)`.
    pub bias: Tensor2,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Tensor2::zeros(input, output),
            bias: Tensor2::zeros(1, output),
        }
    }

    pub fn glorot<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        Dense {
            weight: glorot_uniform(rng, input, output),
            bias: Tensor2::zeros(1, output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row(&self.bias)?;
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &Tensor2, dy: &Tensor2, grads: &mut Dense) -> Result<Tensor2> {
        x.t_matmul_acc(dy, &mut grads.weight)?;
        dy.sum_rows_acc(&mut grads.bias)?;
        dy.matmul_t(&self.weight)
    }
}

impl Parameters for Dense {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Fully connected network: dense layers with a hidden activation between
/// them and an output activation after the last one.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Dense>,
}

/// Activations saved by [`Mlp::forward_cached`]: the input of every layer and
/// the final output.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    inputs: Vec<Tensor2>,
    output: Option<Tensor2>,
}

impl MlpCache {
    pub fn output(&self) -> Option<&Tensor2> {
        self.output.as_ref()
    }
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_dims().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Ok(Mlp { spec, layers })
    }

    pub fn glorot<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| Dense::glorot(rng, i, o))
            .collect();
        Ok(Mlp { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::dims("Mlp::from_layers layer count", dims.len(), layers.len()));
        }
        for (k, ((i, o), l)) in dims.iter().zip(&layers).enumerate() {
            if l.weight.shape() != (*i, *o) || l.bias.shape() != (1, *o) {
                return Err(Error::dims(format!("Mlp layer {k}"), format!("({i},{o})"), format!("{:?}", l.weight.shape())));
            }
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::dims("mlp layer 0 input", self.spec.input_dim, x.cols()));
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.spec.output_activation
        } else {
            self.spec.hidden_activation
        }
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            self.activation(k).apply(&mut h);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h)?;
            self.activation(k).apply(&mut y);
            inputs.push(h);
            h = y;
        }
        Ok((
            h.clone(),
            MlpCache {
                inputs,
                output: Some(h),
            },
        ))
    }

    /// Reverse pass. Parameter gradients are accumulated into `grads`; the
    /// gradient with respect to the network input is returned.
    pub fn backward(&self, cache: &MlpCache, output_grad: &Tensor2, grads: &mut Mlp) -> Result<Tensor2> {
        let output = cache
            .output
            .as_ref()
            .ok_or_else(|| Error::MissingCache("mlp".into()))?;
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::MissingCache(format!(
                "mlp (cache has {} layers, network {})",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        if output_grad.shape() != output.shape() {
            return Err(Error::dims(
                "mlp output gradient",
                format!("{:?}", output.shape()),
                format!("{:?}", output_grad.shape()),
            ));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::dims("mlp gradient layers", self.layers.len(), grads.layers.len()));
        }
        let mut dy = output_grad.clone();
        for k in (0..self.layers.len()).rev() {
            let out_k = if k + 1 == self.layers.len() {
                output
            } else {
                &cache.inputs[k + 1]
            };
            self.activation(k).backprop(out_k, &mut dy);
            dy = self.layers[k].backward(&cache.inputs[k], &dy, &mut grads.layers[k])?;
        }
        Ok(dy)
    }
}

impl Parameters for Mlp {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor2)) {
        for (k, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("layers.{k}")), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor2)) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("layers.{k}")), f);
        }
    }
}
