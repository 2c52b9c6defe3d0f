use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample};
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::featurizer::Featurizer;
use crate::perturb::{apply_attack, AttackConfig};
use crate::rng::indexed_substream;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const THREADS_ENV: &str = "PERTURB_DETECT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when the corpus lacks one of the classes.
    pub auroc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Class 1 is predicted when its score is at least `threshold`.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Metrics> {
        if scores.is_empty() {
            return Err(Error::invalid("cannot evaluate an empty corpus"));
        }
        if scores.len() != labels.len() {
            return Err(Error::Dimension(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (&s, &y) in scores.iter().zip(labels) {
            let pred = s >= threshold;
            match (y, pred) {
                (1, true) => tp += 1,
                (1, false) => fn_ += 1,
                (0, true) => fp += 1,
                (0, false) => tn += 1,
                (other, _) => return Err(Error::invalid(format!("label {other} outside {{0,1}}"))),
            }
            if y == 1 {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Ok(Metrics {
            accuracy: ratio(tp + tn, scores.len()),
            precision,
            recall,
            f1,
            auroc: if pos.is_empty() || neg.is_empty() { None } else { Some(auroc(&pos, &neg)?) },
            tp,
            fp,
            tn,
            fn_,
        })
    }
}

/// Exact pairwise win rate of positive over negative scores, ties counting one half.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("auroc needs at least one positive and one negative score"));
    }
    let mut twice_wins: u64 = 0;
    for p in pos {
        for n in neg {
            twice_wins += if p > n {
                2
            } else if p == n {
                1
            } else {
                0
            };
        }
    }
    Ok(twice_wins as f64 / (2 * pos.len() * neg.len()) as f64)
}

/// Worker count for scoring: `PERTURB_DETECT_THREADS` if set, else available cores.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Class-1 probability for every sample, in corpus order. Work is split into
/// contiguous chunks so the result does not depend on the thread count.
pub fn score_samples(model: &DetectorModel, samples: &[Sample]) -> Result<Vec<f64>> {
    let featurizer = Featurizer::new(model.featurizer)?;
    let score = |s: &Sample| featurizer.embed(&s.text).and_then(|e| model.score(&e));
    let threads = thread_cap().min(samples.len()).max(1);
    if threads == 1 {
        return samples.iter().map(score).collect();
    }
    let chunk = samples.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(score).collect::<Result<Vec<f64>>>()))
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for h in handles {
            out.extend(h.join().expect("scoring thread panicked")?);
        }
        Ok(out)
    })
}

pub fn evaluate(model: &DetectorModel, corpus: &Corpus, threshold: f64) -> Result<Metrics> {
    if corpus.is_empty() {
        return Err(Error::invalid(format!("cannot evaluate empty corpus {:?}", corpus.name)));
    }
    let scores = score_samples(model, &corpus.samples)?;
    let labels: Vec<u8> = corpus.samples.iter().map(|s| s.label).collect();
    Metrics::from_scores(&scores, &labels, threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossDomainReport {
    pub targets: Vec<(String, Metrics)>,
}

impl CrossDomainReport {
    /// Arithmetic mean of accuracy, precision, recall, F1 and AUROC over targets
    /// (AUROC over the targets that define it).
    pub fn average(&self) -> Option<[Option<f64>; 5]> {
        if self.targets.is_empty() {
            return None;
        }
        let mean = |f: &dyn Fn(&Metrics) -> Option<f64>| {
            let v: Vec<f64> = self.targets.iter().filter_map(|(_, m)| f(m)).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some([
            mean(&|m| Some(m.accuracy)),
            mean(&|m| Some(m.precision)),
            mean(&|m| Some(m.recall)),
            mean(&|m| Some(m.f1)),
            mean(&|m| m.auroc),
        ])
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        self.average().and_then(|a| a[0])
    }

    /// One row per target, plus an `average` row when there are at least two.
    pub fn write_csv(&self, manifest: &str, out: &mut dyn Write) -> Result<()> {
        let io = |e| Error::io("metrics csv", e);
        writeln!(out, "{METRICS_HEADER}").map_err(io)?;
        for (name, m) in &self.targets {
            writeln!(out, "{}", metrics_row(manifest, name, m)).map_err(io)?;
        }
        if self.targets.len() >= 2 {
            let avg = self.average().expect("non-empty");
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(out, "{manifest},average,,{},{},{},{},{},,,,", f(avg[0]), f(avg[1]), f(avg[2]), f(avg[3]), f(avg[4])).map_err(io)?;
        }
        Ok(())
    }
}

pub const METRICS_HEADER: &str = "manifest,target,n,accuracy,precision,recall,f1,auroc,tp,fp,tn,fn";

pub fn metrics_row(manifest: &str, name: &str, m: &Metrics) -> String {
    format!(
        "{manifest},{name},{},{},{},{},{},{},{},{},{},{}",
        m.total(),
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.auroc.map(|a| a.to_string()).unwrap_or_default(),
        m.tp,
        m.fp,
        m.tn,
        m.fn_
    )
}

/// Evaluate one source-trained model on every target.
pub fn cross_domain_eval(model: &DetectorModel, targets: &BTreeMap<String, Corpus>) -> Result<CrossDomainReport> {
    let targets = targets
        .iter()
        .map(|(name, c)| Ok((name.clone(), evaluate(model, c, DEFAULT_THRESHOLD)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossDomainReport { targets })
}

/// Rewrites the class-1 texts only; sample `i` uses its own attack substream.
pub fn attack_corpus(corpus: &Corpus, attack: &AttackConfig) -> Result<Corpus> {
    attack.validate()?;
    let samples = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.label != 1 {
                return Ok(s.clone());
            }
            let text = apply_attack(&s.text, attack, &mut indexed_substream(attack.seed, "attack", i as u64));
            Sample::new(text, s.label, s.domain.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(format!("{}/attacked", corpus.name), samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackReport {
    pub clean: Metrics,
    pub attacked: Metrics,
}

impl AttackReport {
    pub fn accuracy_drop(&self) -> f64 {
        self.clean.accuracy - self.attacked.accuracy
    }
}

pub fn attack_eval(model: &DetectorModel, corpus: &Corpus, attack: &AttackConfig) -> Result<AttackReport> {
    let clean = evaluate(model, corpus, DEFAULT_THRESHOLD)?;
    let attacked = evaluate(model, &attack_corpus(corpus, attack)?, DEFAULT_THRESHOLD)?;
    Ok(AttackReport { clean, attacked })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n { 1.0 } else if p < n { 0.0 } else { 0.5 };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8], &[0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.2], &[0.8]).unwrap(), 0.0);
        assert!(auroc(&[], &[0.1]).is_err());
        assert_eq!(auroc(&[0.3, 0.3, 0.1], &[0.3, 0.2]).unwrap(), brute_auroc(&[0.3, 0.3, 0.1], &[0.3, 0.2]));
    }

    #[test]
    fn confusion_closed_form() {
        let m = Metrics::from_scores(&[0.9, 0.2, 0.7, 0.1], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 1, 1, 1));
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.5, 0.5, 0.5, 0.5));
        let perfect = Metrics::from_scores(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!((perfect.accuracy, perfect.f1), (1.0, 1.0));
        let tie = Metrics::from_scores(&[0.5, 0.5], &[1, 0], 0.5).unwrap();
        assert_eq!((tie.tp, tie.fp), (1, 1));
        let none = Metrics::from_scores(&[0.1], &[1], 0.5).unwrap();
        assert_eq!((none.precision, none.recall, none.f1, none.auroc), (0.0, 0.0, 0.0, None));
    }
}
