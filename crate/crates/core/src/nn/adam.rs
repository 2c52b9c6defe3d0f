use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64, decay: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
        }
    }
}

/// Adam with bias correction and per-epoch exponential learning-rate decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    epoch: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Mlp) -> Self {
        let n = params.param_count();
        Adam {
            config,
            step: 0,
            epoch: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    pub fn effective_lr(&self) -> f64 {
        self.config.lr * self.config.decay.powi(self.epoch as i32)
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if params.param_count() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} parameters / {} gradients",
                self.m.len(),
                params.param_count(),
                grads.len()
            )));
        }
        let layer_mismatch = params.layers().len() != grads.weights.len()
            || params
                .layers()
                .iter()
                .zip(grads.weights.iter().zip(&grads.bias))
                .any(|(l, (w, b))| l.weights.len() != w.len() || l.bias.len() != b.len());
        if layer_mismatch {
            return Err(Error::Dimension("gradient layout does not match the network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to adam".into()));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let lr = self.effective_lr();
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (inv_c1, inv_c2) = (1.0 / c1, 1.0 / c2);
        let mut offset = 0;
        let layers = params.layers_mut();
        for (i, layer) in layers.iter_mut().enumerate() {
            for (p, g) in [(&mut layer.weights, &grads.weights[i]), (&mut layer.bias, &grads.bias[i])] {
                let n = p.len();
                let m = &mut self.m[offset..offset + n];
                let v = &mut self.v[offset..offset + n];
                for (((pk, gk), mk), vk) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mk = beta1 * *mk + (1.0 - beta1) * gk;
                    *vk = beta2 * *vk + (1.0 - beta2) * gk * gk;
                    *pk -= lr * (*mk * inv_c1) / ((*vk * inv_c2).sqrt() + eps);
                }
                offset += n;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn scalar(value: f64) -> Mlp {
        let mut l = Dense::zeros(1, 1, Activation::Linear);
        l.weights[0] = value;
        Mlp::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = scalar(0.7);
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::with_lr(0.1, 1.0), &p);
        opt.step(&mut p, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut p = scalar(0.0);
        let mut opt = Adam::new(AdamConfig::with_lr(0.1, 1.0), &p);
        let mut g = Gradients::zeros_like(&p);
        g.weights[0][0] = 1.0;
        opt.step(&mut p, &g).unwrap();
        let expected = -0.1 * (1.0 / (1.0 + 1e-8));
        assert!((p.layers()[0].weights[0] - expected).abs() < 1e-15);
        assert_eq!(p.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn decay_is_per_epoch() {
        let p = scalar(0.0);
        let mut opt = Adam::new(AdamConfig::with_lr(3e-4, 0.995), &p);
        opt.set_epoch(2);
        assert!((opt.effective_lr() - 3e-4 * 0.995 * 0.995).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar(0.0);
        let mut opt = Adam::new(AdamConfig::with_lr(0.1, 1.0), &p);
        let mut g = Gradients::zeros_like(&p);
        g.bias[0][0] = f64::NAN;
        assert!(matches!(opt.step(&mut p, &g), Err(Error::NonFinite(_))));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn deterministic_and_count_preserving() {
        let mut a = scalar(0.3);
        let mut b = scalar(0.3);
        let mut g = Gradients::zeros_like(&a);
        g.weights[0][0] = -0.4;
        g.bias[0][0] = 0.2;
        let mut oa = Adam::new(AdamConfig::with_lr(0.01, 1.0), &a);
        let mut ob = oa.clone();
        for _ in 0..5 {
            oa.step(&mut a, &g).unwrap();
            ob.step(&mut b, &g).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(a.param_count(), 2);
    }
}
