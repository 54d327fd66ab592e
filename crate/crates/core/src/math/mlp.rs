use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_dim, MathError};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// One dense layer; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A feed-forward stack of dense layers. Hidden layers use relu, the last
/// layer is linear; heads apply their own squashing.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// Smallest `|z|` over the pre-activations of relu layers, i.e. the
    /// distance of this batch from the nearest kink.
    pub fn relu_margin(&self, net: &Mlp) -> f64 {
        net.layers()
            .iter()
            .zip(&self.pre_activations)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients (or optimizer moments) shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl Mlp {
    /// Validates the layer chain and builds the network.
    pub fn new(mut layers: Vec<Layer>) -> Result<Self, MathError> {
        for layer in &mut layers {
            if !layer.weights.is_standard_layout() {
                layer.weights = layer.weights.as_standard_layout().into_owned();
            }
        }
        if layers.is_empty() {
            return Err(MathError::InvalidLayout("no layers".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(MathError::InvalidLayout(format!(
                    "layer {k}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(MathError::InvalidLayout(format!("layer {k} has an empty dimension")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(MathError::InvalidLayout(format!(
                    "layer {k} out dim {} does not feed layer {} in dim {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(MathError::InvalidLayout("final layer must be linear".into()));
        }
        Ok(Self { layers })
    }

    /// Relu hidden layers and a linear output; weights uniform in
    /// `±1/sqrt(fan_in)`, biases zero.
    pub fn init(sizes: &[usize], rng: &mut RngStream) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.uniform_range(-bound, bound)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: if k + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self::new(layers).expect("init produces a valid chain")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn hidden_layer_count(&self) -> usize {
        self.layers.len() - 1
    }

    /// `(out, in)` for every layer.
    pub fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights.dim()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<(Array1<f64>, ForwardCache), MathError> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| MathError::InvalidLayout("input view".into()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.index_axis_move(Axis(0), 0), cache))
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), MathError> {
        check_dim("mlp input", self.input_dim(), input.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &self.layers {
            let z = affine(layer, x.view());
            let a = activate(layer.activation, &z);
            inputs.push(x);
            pre_activations.push(z);
            x = a;
        }
        ensure_finite(&x, "mlp forward")?;
        Ok((
            x,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without recording a cache.
    pub fn predict_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, MathError> {
        check_dim("mlp input", self.input_dim(), input.ncols())?;
        let mut x: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let z = match &x {
                None => affine(layer, input),
                Some(prev) => affine(layer, prev.view()),
            };
            x = Some(match layer.activation {
                Activation::Relu => z.mapv_into(|v| v.max(0.0)),
                Activation::Identity => z,
            });
        }
        let x = x.expect("at least one layer");
        ensure_finite(&x, "mlp forward")?;
        Ok(x)
    }

    /// Backpropagates `grad_output` (d loss / d output, one row per sample)
    /// through the cached pass. Returns parameter gradients and, when
    /// requested, the gradient with respect to the input batch.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
        want_input_grad: bool,
    ) -> Result<(MlpGrads, Option<Array2<f64>>), MathError> {
        if cache.inputs.len() != self.layers.len() || cache.pre_activations.len() != self.layers.len() {
            return Err(MathError::CacheMismatch(format!(
                "cache has {} layers, network has {}",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, x)) in self.layers.iter().zip(&cache.inputs).enumerate() {
            if x.ncols() != layer.in_dim() {
                return Err(MathError::CacheMismatch(format!("layer {k} input width")));
            }
        }
        let batch = cache.batch_size();
        if grad_output.dim() != (batch, self.output_dim()) {
            return Err(MathError::CacheMismatch(format!(
                "grad_output shape {:?}, expected {:?}",
                grad_output.dim(),
                (batch, self.output_dim())
            )));
        }

        let mut grads: Vec<Option<LayerGrads>> = vec![None; self.layers.len()];
        let mut delta = grad_output.to_owned();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre_activations[k])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let dw = delta.t().dot(&cache.inputs[k]);
            let db = delta.sum_axis(Axis(0));
            grads[k] = Some(LayerGrads { weights: dw, bias: db });
            if k > 0 || want_input_grad {
                delta = delta.dot(&layer.weights);
            }
        }
        let grads = MlpGrads {
            layers: grads.into_iter().map(|g| g.expect("filled")).collect(),
        };
        if !grads.is_finite() {
            return Err(MathError::NonFinite("mlp backward"));
        }
        Ok((grads, want_input_grad.then_some(delta)))
    }

    /// Parameter at a flat index; layer by layer, weights (row-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (k, local) = self.locate(index);
        let layer = &self.layers[k];
        let nw = layer.weights.len();
        if local < nw {
            layer.weights.as_slice().expect("standard layout")[local]
        } else {
            layer.bias[local - nw]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (k, local) = self.locate(index);
        let layer = &mut self.layers[k];
        let nw = layer.weights.len();
        if local < nw {
            layer.weights.as_slice_mut().expect("standard layout")[local] = value;
        } else {
            layer.bias[local - nw] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (k, layer) in self.layers.iter().enumerate() {
            let n = layer.weights.len() + layer.bias.len();
            if index < n {
                return (k, index);
            }
            index -= n;
        }
        panic!("parameter index out of range");
    }
}

fn affine(layer: &Layer, x: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.bias;
    z
}

fn activate(activation: Activation, z: &Array2<f64>) -> Array2<f64> {
    match activation {
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::Identity => z.clone(),
    }
}

fn ensure_finite(x: &Array2<f64>, context: &'static str) -> Result<(), MathError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MathError::NonFinite(context))
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &Mlp) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn matches(&self, params: &Mlp) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.bias.len() == l.bias.len())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut index = index;
        for g in &self.layers {
            let nw = g.weights.len();
            if index < nw {
                return g.weights.as_slice().expect("standard layout")[index];
            }
            index -= nw;
            if index < g.bias.len() {
                return g.bias[index];
            }
            index -= g.bias.len();
        }
        panic!("gradient index out of range");
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|g| g.weights.len() + g.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}
