//! Feature extractor + softmax head and the detector's training objective:
//! clean and noisy cross-entropy plus a representation-distance penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{EmbeddingMatrix, FeaturizerConfig};
use crate::nn::{Activation, Gradients, Mlp};
use crate::rng::Stream;

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if self.lambda1 + self.lambda2 <= 0.0 {
            return Err(Error::invalid("lambda1 + lambda2 must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub extractor: Mlp,
    pub head: Mlp,
    pub featurizer: FeaturizerConfig,
}

impl DetectorModel {
    /// `embed_dim -> hidden (relu) -> repr_dim (tanh)` extractor and a linear
    /// two-logit head.
    pub fn new(featurizer: FeaturizerConfig, hidden: usize, repr_dim: usize, rng: &mut Stream) -> Result<Self> {
        let extractor = Mlp::glorot(
            &[featurizer.embed_dim, hidden, repr_dim],
            &[Activation::Relu, Activation::Tanh],
            rng,
        )?;
        let head = Mlp::glorot(&[repr_dim, 2], &[Activation::Linear], rng)?;
        Self::from_parts(extractor, head, featurizer)
    }

    pub fn from_parts(extractor: Mlp, head: Mlp, featurizer: FeaturizerConfig) -> Result<Self> {
        featurizer.validate()?;
        if extractor.input_dim() != featurizer.embed_dim {
            return Err(Error::Dimension(format!(
                "extractor takes {} inputs, embeddings have {}",
                extractor.input_dim(),
                featurizer.embed_dim
            )));
        }
        if head.input_dim() != extractor.output_dim() || head.output_dim() != 2 {
            return Err(Error::Dimension("head must map the representation to 2 logits".into()));
        }
        Ok(DetectorModel {
            extractor,
            head,
            featurizer,
        })
    }

    pub fn repr_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.extractor.is_finite() && self.head.is_finite()
    }

    /// Representation of a mean-pooled embedding.
    pub fn extract_pooled(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        if pooled.len() != self.featurizer.embed_dim {
            return Err(Error::Dimension(format!(
                "embedding width {} but extractor expects {}",
                pooled.len(),
                self.featurizer.embed_dim
            )));
        }
        self.extractor.predict(pooled)
    }

    pub fn extract(&self, e: &EmbeddingMatrix) -> Result<Vec<f64>> {
        self.extract_pooled(&e.mean_pool())
    }

    pub fn predict(&self, z: &[f64]) -> Result<[f64; 2]> {
        if z.len() != self.repr_dim() {
            return Err(Error::Dimension(format!(
                "representation has {} entries, head expects {}",
                z.len(),
                self.repr_dim()
            )));
        }
        let logits = self.head.predict(z)?;
        softmax2(&logits)
    }

    /// Class-1 probability for an embedding.
    pub fn score(&self, e: &EmbeddingMatrix) -> Result<f64> {
        Ok(self.predict(&self.extract(e)?)?[1])
    }
}

pub fn softmax2(logits: &[f64]) -> Result<[f64; 2]> {
    if logits.len() != 2 {
        return Err(Error::Dimension(format!("expected 2 logits, got {}", logits.len())));
    }
    if !logits.iter().all(|l| l.is_finite()) {
        return Err(Error::NonFinite(format!("logits {logits:?}")));
    }
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    Ok([e0 / s, e1 / s])
}

/// Squared Euclidean distance.
pub fn distance_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} entries", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Binary cross-entropy of the class-1 probability, clamped away from 0 and 1.
pub fn ce_loss(p1: f64, label: u8) -> Result<f64> {
    if label > 1 {
        return Err(Error::invalid(format!("label {label} outside {{0,1}}")));
    }
    let p = p1.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(if label == 1 { -p.ln() } else { -(1.0 - p).ln() })
}

pub fn total_loss(cls_x: f64, cls_n: f64, dis: f64, w: &LossWeights) -> f64 {
    w.lambda1 * cls_x + w.lambda2 * cls_n + w.lambda3 * dis
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cls_x: f64,
    pub cls_n: f64,
    pub dis: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGrads {
    pub extractor: Gradients,
    pub head: Gradients,
}

/// d CE / d logits; zero where the probability clamp is active.
fn ce_logit_grad(p1: f64, label: u8) -> [f64; 2] {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p1) {
        return [0.0, 0.0];
    }
    let d1 = p1 - label as f64;
    [-d1, d1]
}

/// Objective on pooled embeddings; `noisy` is `None` when no perturbed view
/// is trained (the noisy terms then contribute zero).
pub fn loss_pooled(model: &DetectorModel, clean: &[f64], noisy: Option<&[f64]>, label: u8, w: &LossWeights) -> Result<LossBreakdown> {
    let z_x = model.extract_pooled(clean)?;
    let cls_x = ce_loss(model.predict(&z_x)?[1], label)?;
    let (cls_n, dis) = match noisy {
        Some(noisy) => {
            let z_n = model.extract_pooled(noisy)?;
            (ce_loss(model.predict(&z_n)?[1], label)?, distance_loss(&z_x, &z_n)?)
        }
        None => (0.0, 0.0),
    };
    let total = total_loss(cls_x, cls_n, dis, w);
    if !total.is_finite() {
        return Err(Error::NonFinite("detector loss".into()));
    }
    Ok(LossBreakdown { cls_x, cls_n, dis, total })
}

pub fn loss(model: &DetectorModel, e_x: &EmbeddingMatrix, e_n: Option<&EmbeddingMatrix>, label: u8, w: &LossWeights) -> Result<LossBreakdown> {
    let noisy = e_n.map(EmbeddingMatrix::mean_pool);
    loss_pooled(model, &e_x.mean_pool(), noisy.as_deref(), label, w)
}

pub fn grad_pooled(
    model: &DetectorModel,
    clean: &[f64],
    noisy: Option<&[f64]>,
    label: u8,
    w: &LossWeights,
) -> Result<(LossBreakdown, DetectorGrads)> {
    if label > 1 {
        return Err(Error::invalid(format!("label {label} outside {{0,1}}")));
    }
    if clean.len() != model.featurizer.embed_dim {
        return Err(Error::Dimension("clean embedding width".into()));
    }
    let ext_x = model.extractor.forward(clean)?;
    let z_x = ext_x.output().to_vec();
    let head_x = model.head.forward(&z_x)?;
    let p_x = softmax2(head_x.output())?;
    let cls_x = ce_loss(p_x[1], label)?;

    let mut g_logit_x = ce_logit_grad(p_x[1], label);
    g_logit_x.iter_mut().for_each(|g| *g *= w.lambda1);
    let (mut head_grads, mut dz_x) = model.head.backward(&head_x, &g_logit_x)?;

    let mut cls_n = 0.0;
    let mut dis = 0.0;
    let mut ext_grads = Gradients::zeros_like(&model.extractor);
    if let Some(noisy) = noisy {
        if noisy.len() != clean.len() {
            return Err(Error::Dimension("noisy embedding width".into()));
        }
        let ext_n = model.extractor.forward(noisy)?;
        let z_n = ext_n.output().to_vec();
        let head_n = model.head.forward(&z_n)?;
        let p_n = softmax2(head_n.output())?;
        cls_n = ce_loss(p_n[1], label)?;
        dis = distance_loss(&z_x, &z_n)?;

        let mut g_logit_n = ce_logit_grad(p_n[1], label);
        g_logit_n.iter_mut().for_each(|g| *g *= w.lambda2);
        let (head_n_grads, mut dz_n) = model.head.backward(&head_n, &g_logit_n)?;
        head_grads.add_scaled(&head_n_grads, 1.0);
        for ((gx, gn), (a, b)) in dz_x.iter_mut().zip(dz_n.iter_mut()).zip(z_x.iter().zip(&z_n)) {
            let d = 2.0 * w.lambda3 * (a - b);
            *gx += d;
            *gn -= d;
        }
        let (g, _) = model.extractor.backward(&ext_n, &dz_n)?;
        ext_grads.add_scaled(&g, 1.0);
    }
    let (g, _) = model.extractor.backward(&ext_x, &dz_x)?;
    ext_grads.add_scaled(&g, 1.0);

    let total = total_loss(cls_x, cls_n, dis, w);
    let grads = DetectorGrads {
        extractor: ext_grads,
        head: head_grads,
    };
    if !total.is_finite() || !grads.extractor.is_finite() || !grads.head.is_finite() {
        return Err(Error::NonFinite("detector loss or gradient".into()));
    }
    Ok((LossBreakdown { cls_x, cls_n, dis, total }, grads))
}

/// Exact gradient of the weighted objective with respect to every trainable
/// detector parameter. The featurizer is frozen and receives nothing.
pub fn grad_total_loss(
    model: &DetectorModel,
    e_x: &EmbeddingMatrix,
    e_n: Option<&EmbeddingMatrix>,
    label: u8,
    w: &LossWeights,
) -> Result<(LossBreakdown, DetectorGrads)> {
    if let Some(e_n) = e_n {
        if (e_n.rows(), e_n.cols()) != (e_x.rows(), e_x.cols()) {
            return Err(Error::Dimension("clean and noisy embeddings differ in shape".into()));
        }
    }
    let noisy = e_n.map(EmbeddingMatrix::mean_pool);
    grad_pooled(model, &e_x.mean_pool(), noisy.as_deref(), label, w)
}
