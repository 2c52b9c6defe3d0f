use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::featurizer::Featurizer;
use crate::perturb::{inject, sample_noise, NoiseState};
use crate::rng::{indexed_substream, substream};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Axis-aligned Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != var.len() {
            return Err(Error::Dimension(format!("{} means vs {} variances", mean.len(), var.len())));
        }
        if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("gaussian parameters must be finite with positive variance"));
        }
        Ok(DiagGaussian { mean, var })
    }

    /// Per-dimension mean and population variance, variance floored at 1e-6.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let k = points.first().map(Vec::len).unwrap_or(0);
        if k == 0 {
            return Err(Error::invalid("cannot fit a gaussian to an empty set"));
        }
        if points.len() < 2 * k {
            return Err(Error::invalid(format!("need at least {} points to fit {k} dimensions, got {}", 2 * k, points.len())));
        }
        if points.iter().any(|p| p.len() != k) {
            return Err(Error::Dimension("points differ in dimension".into()));
        }
        let n = points.len() as f64;
        let mut mean = vec![0.0; k];
        for p in points {
            mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; k];
        for p in points {
            var.iter_mut().zip(p.iter().zip(&mean)).for_each(|(v, (x, m))| *v += (x - m).powi(2) / n);
        }
        var.iter_mut().for_each(|v| *v = v.max(VARIANCE_FLOOR));
        DiagGaussian::new(mean, var)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Closed-form KL(a || b).
pub fn kl_diag(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("kl between {}- and {}-dimensional gaussians", a.dim(), b.dim())));
    }
    let mut kl = 0.0;
    for j in 0..a.dim() {
        let (va, vb) = (a.var[j], b.var[j]);
        kl += 0.5 * (vb / va).ln() + (va + (a.mean[j] - b.mean[j]).powi(2)) / (2.0 * vb) - 0.5;
    }
    Ok(kl)
}

/// KL between diagonal-Gaussian fits of two feature sets.
pub fn kl_shift(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    kl_diag(&DiagGaussian::fit(a)?, &DiagGaussian::fit(b)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    /// Detector extractor outputs `z`.
    Extractor,
    /// Mean-pooled frozen embeddings.
    Pooled,
}

impl std::str::FromStr for FeatureSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extractor" => Ok(FeatureSpace::Extractor),
            "pooled" => Ok(FeatureSpace::Pooled),
            other => Err(Error::invalid(format!("unknown feature space {other:?} (expected extractor|pooled)"))),
        }
    }
}

impl FeatureSpace {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureSpace::Extractor => "extractor",
            FeatureSpace::Pooled => "pooled",
        }
    }
}

/// A distribution to compare: a named corpus, optionally with injected noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSide {
    pub corpus: String,
    pub noise: Option<NoiseState>,
}

impl ShiftSide {
    pub fn label(&self) -> String {
        match &self.noise {
            None => self.corpus.clone(),
            Some(s) => format!("{}+noise({},{})", self.corpus, s.mu, s.sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRow {
    pub a: String,
    pub b: String,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainShiftReport {
    pub estimator: String,
    pub rows: Vec<ShiftRow>,
}

impl DomainShiftReport {
    pub fn write_csv(&self, manifest: &str, out: &mut dyn Write) -> Result<()> {
        let io = |e| Error::io("shift csv", e);
        writeln!(out, "manifest,a,b,kl,estimator").map_err(io)?;
        for r in &self.rows {
            writeln!(out, "{manifest},{},{},{},{}", r.a, r.b, r.kl, self.estimator).map_err(io)?;
        }
        Ok(())
    }
}

/// Feature vectors of a corpus, optionally after noise injection. Noise for
/// sample `i` comes from its own substream of `seed`.
pub fn corpus_features(model: &DetectorModel, corpus: &Corpus, noise: Option<&NoiseState>, space: FeatureSpace, seed: u64) -> Result<Vec<Vec<f64>>> {
    let featurizer = Featurizer::new(model.featurizer)?;
    corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut e = featurizer.embed(&s.text)?;
            if let Some(state) = noise {
                let n = sample_noise(state, e.rows(), e.cols(), &mut indexed_substream(seed, "shift/noise", i as u64))?;
                e = inject(&e, &n)?;
            }
            match space {
                FeatureSpace::Pooled => Ok(e.mean_pool()),
                FeatureSpace::Extractor => model.extract(&e),
            }
        })
        .collect()
}

/// KL for every requested ordered pair of sides.
pub fn shift_report(
    model: &DetectorModel,
    corpora: &std::collections::BTreeMap<String, Corpus>,
    pairs: &[(ShiftSide, ShiftSide)],
    space: FeatureSpace,
    seed: u64,
) -> Result<DomainShiftReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("shift report needs at least one pair"));
    }
    let mut cache: Vec<(ShiftSide, DiagGaussian)> = Vec::new();
    let mut fit = |side: &ShiftSide| -> Result<DiagGaussian> {
        if let Some((_, g)) = cache.iter().find(|(s, _)| s == side) {
            return Ok(g.clone());
        }
        let corpus = corpora
            .get(&side.corpus)
            .ok_or_else(|| Error::invalid(format!("unknown corpus {:?} in shift pair", side.corpus)))?;
        let g = DiagGaussian::fit(&corpus_features(model, corpus, side.noise.as_ref(), space, substream_seed(seed, &side.corpus))?)?;
        cache.push((side.clone(), g.clone()));
        Ok(g)
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let (ga, gb) = (fit(a)?, fit(b)?);
        rows.push(ShiftRow { a: a.label(), b: b.label(), kl: kl_diag(&ga, &gb)? });
    }
    Ok(DomainShiftReport { estimator: format!("diag_gaussian/{}", space.name()), rows })
}

fn substream_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    substream(seed, &format!("shift/{name}")).next_u64()
}
