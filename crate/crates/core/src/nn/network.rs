use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Chains `dims` into dense layers: relu everywhere except the last
    /// layer, which uses `output`.
    pub fn chain(dims: &[usize], output: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(invalid(
                "a network needs at least an input and an output width",
            ));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| LayerSpec {
                in_dim: dims[i],
                out_dim: dims[i + 1],
                activation: if i + 1 == n { output } else { Activation::Relu },
            })
            .collect();
        let spec = Self { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(invalid("network has no layers"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(invalid(format!("layer {i} has a zero dimension")));
            }
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(invalid(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim,
                    i + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim * l.out_dim + l.out_dim)
            .sum()
    }
}

/// Weights (out × in) and bias (out) of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// The trainable weights and biases of a network, plus its spec.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: NetworkSpec,
    layers: Vec<DenseLayer>,
}

/// Gradients share the shape and type of the parameters they belong to.
pub type Gradients = NetworkParams;

/// Flat read/write access to every parameter tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameters for NetworkParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

impl NetworkParams {
    pub fn new(spec: NetworkSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "spec has {} layers but {} were given",
                spec.layers.len(),
                layers.len()
            )));
        }
        for (i, (s, l)) in spec.layers.iter().zip(&layers).enumerate() {
            if l.weight.dim() != (s.out_dim, s.in_dim) || l.bias.len() != s.out_dim {
                return Err(Error::Shape(format!(
                    "layer {i}: expected weight {}x{} and bias {}, got {:?} and {}",
                    s.out_dim,
                    s.in_dim,
                    s.out_dim,
                    l.weight.dim(),
                    l.bias.len()
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| DenseLayer {
                weight: l.weight.as_standard_layout().into_owned(),
                bias: l.bias,
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| DenseLayer {
                weight: Array2::zeros((l.out_dim, l.in_dim)),
                bias: Array1::zeros(l.out_dim),
            })
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// The first `n` layers as a standalone network.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.layers.len() {
            return Err(invalid(format!(
                "cannot take {n} of {} layers",
                self.layers.len()
            )));
        }
        Self::new(
            NetworkSpec {
                layers: self.spec.layers[..n].to_vec(),
            },
            self.layers[..n].to_vec(),
        )
    }
}

/// He-uniform initialization: weights ~ U(−√(6/in), √(6/in)), zero biases.
pub fn init_he_uniform(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = rng::seeded(seed);
    let mut params = NetworkParams::zeros(spec);
    for (s, layer) in spec.layers.iter().zip(params.layers.iter_mut()) {
        let bound = (6.0 / s.in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| invalid(e.to_string()))?;
        for w in layer.weight.iter_mut() {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Outputs of every layer of one forward pass; `outputs[0]` is the input.
/// Each matrix is features × batch.
#[derive(Debug, Clone)]
pub struct Activations {
    pub outputs: Vec<Array2<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("at least the input")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.outputs.pop().expect("at least the input")
    }
}

/// Computes `F(W·a + b)` layer by layer on a features × batch input.
pub fn forward(params: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<Activations> {
    if x.nrows() != params.spec.in_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.nrows(),
            params.spec.in_dim()
        )));
    }
    let mut outputs = Vec::with_capacity(params.layers.len() + 1);
    outputs.push(x.to_owned());
    for (s, l) in params.spec.layers.iter().zip(&params.layers) {
        let prev = outputs.last().expect("non-empty");
        let mut z = l.weight.dot(prev);
        z += &l.bias.view().insert_axis(Axis(1));
        if s.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        outputs.push(z);
    }
    Ok(Activations { outputs })
}

/// Final-layer output only.
pub fn predict(params: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(forward(params, x)?.into_output())
}

/// Mean over all elements of the squared difference.
pub fn loss_mse(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(invalid("mse of an empty matrix"));
    }
    let ss: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(ss / pred.len() as f64)
}

/// ∂MSE/∂pred.
pub fn mse_grad(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let scale = 2.0 / pred.len() as f64;
    Ok((&pred - &target) * scale)
}

fn check_activations(params: &NetworkParams, acts: &Activations) -> Result<usize> {
    if acts.outputs.len() != params.layers.len() + 1 {
        return Err(Error::Shape(format!(
            "activations hold {} tensors, expected {}",
            acts.outputs.len(),
            params.layers.len() + 1
        )));
    }
    let batch = acts.outputs[0].ncols();
    for (i, (a, d)) in acts.outputs.iter().zip(params.spec.dims()).enumerate() {
        if a.dim() != (d, batch) {
            return Err(Error::Shape(format!(
                "activation {i} is {:?}, expected ({d}, {batch})",
                a.dim()
            )));
        }
    }
    Ok(batch)
}

/// Backpropagates `grad_output` (∂L/∂output) through the network.
///
/// Returns parameter gradients and, when `want_input_grad` is set, ∂L/∂input.
/// The relu derivative at exactly zero is taken as zero.
pub fn backprop(
    params: &NetworkParams,
    acts: &Activations,
    grad_output: Array2<f64>,
    want_input_grad: bool,
) -> Result<(Gradients, Option<Array2<f64>>)> {
    let batch = check_activations(params, acts)?;
    if grad_output.dim() != (params.spec.out_dim(), batch) {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, expected ({}, {batch})",
            grad_output.dim(),
            params.spec.out_dim()
        )));
    }
    let mut grads = NetworkParams::zeros(&params.spec);
    let mut delta = grad_output;
    for i in (0..params.layers.len()).rev() {
        if params.spec.layers[i].activation == Activation::Relu {
            ndarray::Zip::from(&mut delta)
                .and(&acts.outputs[i + 1])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
        }
        let g = &mut grads.layers[i];
        ndarray::linalg::general_mat_mul(1.0, &delta, &acts.outputs[i].t(), 0.0, &mut g.weight);
        g.bias = delta.sum_axis(Axis(1));
        if i > 0 || want_input_grad {
            delta = params.layers[i].weight.t().dot(&delta);
        }
    }
    Ok((grads, want_input_grad.then_some(delta)))
}

/// Exact gradients of `loss_mse(forward(x), target)` with respect to every
/// weight and bias.
pub fn backward(
    params: &NetworkParams,
    acts: &Activations,
    target: ArrayView2<'_, f64>,
) -> Result<Gradients> {
    check_activations(params, acts)?;
    let g = mse_grad(acts.output().view(), target)?;
    Ok(backprop(params, acts, g, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn he_bound() {
        let spec = NetworkSpec::chain(&[6, 5, 3], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 1).unwrap();
        assert!(p.layers()[0].weight.iter().all(|w| w.abs() <= 1.0));
        let b2 = (6.0f64 / 5.0).sqrt();
        assert!(p.layers()[1].weight.iter().all(|w| w.abs() <= b2));
        assert!(p.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(p, init_he_uniform(&spec, 1).unwrap());
    }

    #[test]
    fn he_variance() {
        // Var U(-a, a) = a²/3 = 2 / in_dim.
        let spec = NetworkSpec::chain(&[100, 10_000], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 5).unwrap();
        let w = &p.layers()[0].weight;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.02).abs() / 0.02 < 0.05, "variance {var}");
    }

    #[test]
    fn zero_relu_net_outputs_zero() {
        let spec = NetworkSpec::chain(&[3, 4, 2], Activation::Relu).unwrap();
        let p = NetworkParams::zeros(&spec);
        let out = predict(&p, array![[1.0], [-2.0], [3.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_neuron() {
        let spec = NetworkSpec::chain(&[1, 1], Activation::Linear).unwrap();
        let p = NetworkParams::new(
            spec,
            vec![DenseLayer {
                weight: array![[2.0]],
                bias: array![1.0],
            }],
        )
        .unwrap();
        assert_eq!(predict(&p, array![[3.0]].view()).unwrap()[[0, 0]], 7.0);
    }

    #[test]
    fn two_layer_hand_computation() {
        // x = (1, -1)
        // hidden = relu([[1, 2], [0.5, -1]] x + [0.1, -0.2]) = relu(-0.9, 1.3) = (0, 1.3)
        // out = [3, -0.5] · hidden + 0.25 = -0.65 + 0.25 = -0.4
        let spec = NetworkSpec::chain(&[2, 2, 1], Activation::Linear).unwrap();
        let p = NetworkParams::new(
            spec,
            vec![
                DenseLayer {
                    weight: array![[1.0, 2.0], [0.5, -1.0]],
                    bias: array![0.1, -0.2],
                },
                DenseLayer {
                    weight: array![[3.0, -0.5]],
                    bias: array![0.25],
                },
            ],
        )
        .unwrap();
        let acts = forward(&p, array![[1.0], [-1.0]].view()).unwrap();
        assert_eq!(acts.outputs[1], array![[0.0], [1.3]]);
        assert!((acts.output()[[0, 0]] - (-0.4)).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let spec = NetworkSpec::chain(&[3, 1], Activation::Linear).unwrap();
        let p = NetworkParams::zeros(&spec);
        assert!(forward(&p, array![[1.0], [2.0]].view()).is_err());
    }

    #[test]
    fn mse_cases() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(loss_mse(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + 2.0;
        assert_eq!(loss_mse(b.view(), a.view()).unwrap(), 4.0);
        // residuals 1, -1, 0, 2, 0, -3 -> (1 + 1 + 0 + 4 + 0 + 9) / 6 = 2.5
        let c = array![[2.0, 1.0, 3.0], [6.0, 5.0, 3.0]];
        assert_eq!(loss_mse(c.view(), a.view()).unwrap(), 2.5);
        assert!(loss_mse(a.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn backward_single_neuron() {
        let spec = NetworkSpec::chain(&[1, 1], Activation::Linear).unwrap();
        let p = NetworkParams::new(
            spec,
            vec![DenseLayer {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        )
        .unwrap();
        let x = array![[1.0]];
        let acts = forward(&p, x.view()).unwrap();
        let g = backward(&p, &acts, array![[0.0]].view()).unwrap();
        assert_eq!(g.layers()[0].weight[[0, 0]], 2.0);
        assert_eq!(g.layers()[0].bias[0], 2.0);
    }

    #[test]
    fn backward_zero_at_stationary_point() {
        let spec = NetworkSpec::chain(&[3, 4, 2], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 3).unwrap();
        let x = array![[0.1, 0.2], [0.3, -0.4], [0.5, 0.6]];
        let acts = forward(&p, x.view()).unwrap();
        let target = acts.output().clone();
        let g = backward(&p, &acts, target.view()).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_rejects_stale_activations() {
        let spec = NetworkSpec::chain(&[3, 4, 2], Activation::Linear).unwrap();
        let other = NetworkSpec::chain(&[3, 5, 2], Activation::Linear).unwrap();
        let p = init_he_uniform(&spec, 3).unwrap();
        let q = init_he_uniform(&other, 3).unwrap();
        let x = array![[0.1], [0.3], [0.5]];
        let acts = forward(&q, x.view()).unwrap();
        assert!(backward(&p, &acts, array![[0.0], [0.0]].view()).is_err());
    }

    #[test]
    fn chain_spec_dims_and_count() {
        let spec = NetworkSpec::chain(&[10, 4, 3, 2, 3, 4, 10], Activation::Linear).unwrap();
        // (10·4+4)+(4·3+3)+(3·2+2)+(2·3+3)+(3·4+4)+(4·10+10) = 44+15+8+9+16+50
        assert_eq!(spec.parameter_count(), 142);
        assert_eq!(spec.layers[5].activation, Activation::Linear);
        assert_eq!(spec.layers[0].activation, Activation::Relu);
        let bad = NetworkSpec {
            layers: vec![
                LayerSpec {
                    in_dim: 2,
                    out_dim: 3,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    in_dim: 4,
                    out_dim: 1,
                    activation: Activation::Linear,
                },
            ],
        };
        assert!(bad.validate().is_err());
    }
}
