use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Linear => 1.0,
        }
    }
}

/// Affine layer followed by an activation. Weights are row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Stream) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn check(&self, layer: usize) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Shape {
                layer,
                message: "zero-sized layer".into(),
            });
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::Shape {
                layer,
                message: format!(
                    "{} weights / {} biases for a {}x{} layer",
                    self.weights.len(),
                    self.bias.len(),
                    self.out_dim,
                    self.in_dim
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    shapes: Vec<(usize, usize)>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }
}

/// Parameter gradients, shaped like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        let pairs = self.weights.iter_mut().zip(&other.weights).chain(self.bias.iter_mut().zip(&other.bias));
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    /// Flat view in the same order as [`Mlp::flatten`].
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.bias.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.iter().all(|g| g.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.bias.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            l.check(i)?;
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(Error::Shape {
                    layer: i,
                    message: format!(
                        "expects {} inputs but layer {} produces {}",
                        l.in_dim,
                        i - 1,
                        layers[i - 1].out_dim
                    ),
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// `dims` lists layer widths from input to output; `activations` has one
    /// entry per layer.
    pub fn glorot(dims: &[usize], activations: &[Activation], rng: &mut Stream) -> Result<Self> {
        if dims.len() != activations.len() + 1 {
            return Err(Error::invalid(format!(
                "{} widths for {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Dense::glorot(w[0], w[1], a, rng))
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|p| p.is_finite()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape {
                layer: 0,
                message: format!("input has length {}, expected {}", input.len(), self.input_dim()),
            });
        }
        Ok(())
    }

    fn affine(layer: &Dense, x: &[f64]) -> Vec<f64> {
        layer
            .weights
            .chunks_exact(layer.in_dim)
            .zip(&layer.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = Self::affine(layer, &x);
            x.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let z = Self::affine(layer, &x);
            let out: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(x);
            pre.push(z);
            x = out;
        }
        Ok(ForwardCache {
            shapes: self.layers.iter().map(|l| (l.in_dim, l.out_dim)).collect(),
            inputs,
            pre,
            output: x,
        })
    }

    /// Reverse-mode pass: returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if cache.shapes.len() != self.layers.len() {
            return Err(Error::Shape {
                layer: 0,
                message: format!(
                    "cache recorded {} layers, network has {}",
                    cache.shapes.len(),
                    self.layers.len()
                ),
            });
        }
        for (i, (l, &(inp, out))) in self.layers.iter().zip(&cache.shapes).enumerate() {
            if l.in_dim != inp || l.out_dim != out {
                return Err(Error::Shape {
                    layer: i,
                    message: "cache was produced by a network of a different shape".into(),
                });
            }
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::Shape {
                layer: self.layers.len() - 1,
                message: format!(
                    "output gradient has length {}, expected {}",
                    grad_output.len(),
                    self.output_dim()
                ),
            });
        }

        let mut grads = Gradients::zeros_like(self);
        let mut upstream = grad_output.to_vec();
        let mut next_out = cache.output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[i];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(pre)
                .zip(&next_out)
                .map(|((g, &z), &o)| g * layer.activation.derivative(z, o))
                .collect();
            let x = &cache.inputs[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grads.weights[i][o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, v) in row.iter_mut().zip(x) {
                    *g = d * v;
                }
            }
            grads.bias[i].copy_from_slice(&delta);
            let mut down = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                for (acc, w) in down.iter_mut().zip(row) {
                    *acc += w * d;
                }
            }
            upstream = down;
            next_out = x.clone();
        }
        Ok((grads, upstream))
    }
}

/// Dot product with four interleaved partial sums (fixed order, so results
/// are reproducible across runs).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Blend `online` into `target`: `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(online: &Mlp, target: &mut Mlp, tau: f64) -> Result<()> {
    if !online.same_shape(target) {
        return Err(Error::Shape {
            layer: 0,
            message: "online and target networks differ in shape".into(),
        });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("soft-update rate {tau} outside [0,1]")));
    }
    for (t, o) in target.params_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_differences, max_relative_error};
    use crate::rng::substream;

    fn identity(n: usize) -> Mlp {
        let mut l = Dense::zeros(n, n, Activation::Linear);
        for i in 0..n {
            l.weights[i * n + i] = 1.0;
        }
        Mlp::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn identity_linear_layer() {
        let m = identity(3);
        assert_eq!(m.predict(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn relu_kills_negative_preactivations() {
        let mut l = Dense::zeros(2, 3, Activation::Relu);
        l.weights.iter_mut().for_each(|w| *w = -1.0);
        let m = Mlp::from_layers(vec![l]).unwrap();
        assert_eq!(m.predict(&[1.0, 2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut rng = substream(1, "t");
        let m = Mlp::glorot(&[4, 3], &[Activation::Tanh], &mut rng).unwrap();
        assert_eq!(m.predict(&[0.0; 4]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let a = Dense::zeros(2, 3, Activation::Relu);
        let b = Dense::zeros(4, 1, Activation::Linear);
        match Mlp::from_layers(vec![a, b]) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
        let m = identity(2);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Shape { layer: 0, .. })));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let mut rng = substream(1, "t");
        let a = Mlp::glorot(&[2, 3, 1], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
        let b = Mlp::glorot(&[2, 4, 1], &[Activation::Relu, Activation::Linear], &mut rng).unwrap();
        let cache = b.forward(&[0.1, 0.2]).unwrap();
        assert!(a.backward(&cache, &[1.0]).is_err());
        let cache = a.forward(&[0.1, 0.2]).unwrap();
        assert!(a.backward(&cache, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = substream(2, "t");
        let m = Mlp::glorot(&[3, 2], &[Activation::Linear], &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0];
        let g = [1.5, -0.25];
        let (grads, _) = m.backward(&m.forward(&x).unwrap(), &g).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(grads.weights[0][o * 3 + i], g[o] * x[i]);
            }
        }
        assert_eq!(grads.bias[0], g.to_vec());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = substream(3, "t");
        let m = Mlp::glorot(&[3, 5, 2], &[Activation::Tanh, Activation::Linear], &mut rng).unwrap();
        let (grads, dx) = m.backward(&m.forward(&[0.1, 0.2, 0.3]).unwrap(), &[0.0, 0.0]).unwrap();
        assert!(grads.iter().all(|g| *g == 0.0));
        assert!(dx.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn two_layer_gradients_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = substream(seed, "gradcheck");
            let m = Mlp::glorot(&[4, 6, 3], &[Activation::Tanh, Activation::Linear], &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            // scalar objective: <g, f(x)>
            let objective = |flat: &[f64]| {
                let mut net = m.clone();
                net.assign_flat(flat).unwrap();
                net.predict(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
            };
            let (grads, dx) = m.backward(&m.forward(&x).unwrap(), &g).unwrap();
            let numeric = central_differences(objective, &m.flatten(), 1e-5);
            assert!(max_relative_error(&grads.flatten(), &numeric, 1e-6) <= 1e-4);
            let input_objective = |xs: &[f64]| m.predict(xs).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let numeric_dx = central_differences(input_objective, &x, 1e-5);
            assert!(max_relative_error(&dx, &numeric_dx, 1e-6) <= 1e-4);
        }
    }

    #[test]
    fn soft_update_blends() {
        let mut rng = substream(4, "t");
        let online = Mlp::glorot(&[2, 2], &[Activation::Linear], &mut rng).unwrap();
        let mut target = online.clone();
        target.params_mut().for_each(|p| *p = 0.0);
        let mut once = target.clone();
        soft_update(&online, &mut once, 1.0).unwrap();
        assert_eq!(once, online);
        let mut untouched = target.clone();
        soft_update(&online, &mut untouched, 0.0).unwrap();
        assert_eq!(untouched, target);
        let wrong = Mlp::glorot(&[2, 3], &[Activation::Linear], &mut rng).unwrap();
        assert!(soft_update(&online, &mut wrong.clone(), 0.5).is_err());
    }
}
