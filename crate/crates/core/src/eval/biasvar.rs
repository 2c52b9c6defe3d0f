use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng::indexed_substream;
use crate::trainer::{train, TrainConfig};

use super::metrics::{score_samples, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub bias: f64,
    pub variance: f64,
    /// Zero by construction: synthetic labels are noise-free.
    pub noise: f64,
    pub resamples: usize,
}

/// 0/1-loss decomposition of the predictions of `B` models (`predictions[b][i]`)
/// on probe points with the given labels. The main prediction is the majority
/// vote; an even split goes to class 1.
pub fn decompose(predictions: &[Vec<u8>], labels: &[u8]) -> Result<BiasVarianceReport> {
    let b = predictions.len();
    if b < 2 {
        return Err(Error::invalid(format!("need at least 2 resamples, got {b}")));
    }
    if labels.is_empty() {
        return Err(Error::invalid("probe set is empty"));
    }
    if predictions.iter().any(|p| p.len() != labels.len()) {
        return Err(Error::Dimension("every model must predict every probe point".into()));
    }
    let n = labels.len();
    // integer counts keep enumerable cases exact
    let (mut wrong, mut disagree) = (0usize, 0usize);
    for i in 0..n {
        let ones = predictions.iter().filter(|p| p[i] == 1).count();
        let main = u8::from(2 * ones >= b);
        disagree += predictions.iter().filter(|p| p[i] != main).count();
        wrong += usize::from(main != labels[i]);
    }
    Ok(BiasVarianceReport {
        bias: wrong as f64 / n as f64,
        variance: disagree as f64 / (b * n) as f64,
        noise: 0.0,
        resamples: b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// Draw `n` training samples with replacement per model.
    Bootstrap,
    /// Every model sees the full training set.
    Identity,
}

/// Trains one detector per resample of `train_set` and decomposes their
/// predictions on `probe`.
pub fn bias_variance_probe(
    config: &TrainConfig,
    train_set: &Corpus,
    probe: &Corpus,
    resamples: usize,
    resampling: Resampling,
    seed: u64,
) -> Result<BiasVarianceReport> {
    if resamples < 2 {
        return Err(Error::invalid(format!("need at least 2 resamples, got {resamples}")));
    }
    if probe.is_empty() {
        return Err(Error::invalid("probe set is empty"));
    }
    let labels: Vec<u8> = probe.samples.iter().map(|s| s.label).collect();
    let mut predictions = Vec::with_capacity(resamples);
    for b in 0..resamples {
        let set = match resampling {
            Resampling::Identity => train_set.clone(),
            Resampling::Bootstrap => {
                let mut rng = indexed_substream(seed, "biasvar/bootstrap", b as u64);
                let n = train_set.len();
                let samples = (0..n).map(|_| train_set.samples[rng.random_range(0..n)].clone()).collect();
                Corpus::new(format!("{}/boot{b}", train_set.name), samples)
            }
        };
        let ckpt = train(config, &set)?;
        let scores = score_samples(&ckpt.detector, &probe.samples)?;
        predictions.push(scores.iter().map(|&s| u8::from(s >= DEFAULT_THRESHOLD)).collect());
    }
    decompose(&predictions, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_predictor() {
        let labels = [1, 0, 0, 1, 0];
        let r = decompose(&[vec![1; 5], vec![1; 5], vec![1; 5]], &labels).unwrap();
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.bias, 0.6);
    }

    #[test]
    fn even_split_goes_to_class_one() {
        let r = decompose(&[vec![0], vec![1]], &[0]).unwrap();
        assert_eq!((r.bias, r.variance), (1.0, 0.5));
        assert!(decompose(&[vec![0]], &[0]).is_err());
    }
}
