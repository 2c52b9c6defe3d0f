use rand::seq::SliceRandom;

use super::Corpus;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("split ratios must be non-negative"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items; remainder ties go to the
/// earlier part.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified, seeded partition into (train, val, test). Each part keeps the
/// input's sample order.
pub fn split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    ratios.validate()?;
    let r = [ratios.train, ratios.val, ratios.test];
    let mut rng = substream(seed, "split");
    let mut assignment = vec![0u8; corpus.len()];
    for label in 0..2u8 {
        let mut idx: Vec<usize> = corpus
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let counts = apportion(idx.len(), &r);
        let mut it = idx.into_iter();
        for (part, &count) in counts.iter().enumerate() {
            for i in it.by_ref().take(count) {
                assignment[i] = part as u8;
            }
        }
    }
    let mut parts: [Vec<_>; 3] = Default::default();
    for (s, &part) in corpus.samples.iter().zip(&assignment) {
        parts[part as usize].push(s.clone());
    }
    let [train, val, test] = parts;
    Ok((
        Corpus::new(format!("{}/train", corpus.name), train),
        Corpus::new(format!("{}/val", corpus.name), val),
        Corpus::new(format!("{}/test", corpus.name), test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;
    use proptest::prelude::*;

    fn corpus(n0: usize, n1: usize) -> Corpus {
        let mut samples = Vec::new();
        for i in 0..n0 {
            samples.push(Sample::new(format!("h{i}"), 0, "d").unwrap());
        }
        for i in 0..n1 {
            samples.push(Sample::new(format!("m{i}"), 1, "d").unwrap());
        }
        Corpus::new("c", samples)
    }

    #[test]
    fn degenerate_split_keeps_everything() {
        let c = corpus(7, 5);
        let (tr, va, te) = split(&c, SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(tr.samples, c.samples);
        assert!(va.is_empty() && te.is_empty());
    }

    #[test]
    fn sizes_80_10_10() {
        let c = corpus(50, 50);
        let (tr, va, te) = split(&c, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));
        let again = split(&c, SplitRatios::new(0.8, 0.1, 0.1).unwrap(), 1).unwrap();
        assert_eq!(again, (tr, va, te));
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2).is_err());
        let bad = SplitRatios { train: 0.5, val: 0.5, test: 0.5 };
        assert!(split(&corpus(2, 2), bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_stratified_partition(n0 in 0usize..40, n1 in 0usize..40, a in 0.0f64..1.0, b in 0.0f64..1.0, seed in any::<u64>()) {
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let ratios = SplitRatios::new(a, b, 1.0 - a - b).unwrap();
            let c = corpus(n0, n1);
            let (tr, va, te) = split(&c, ratios, seed).unwrap();
            prop_assert_eq!(tr.len() + va.len() + te.len(), c.len());
            let mut seen: Vec<&str> = tr.samples.iter().chain(&va.samples).chain(&te.samples).map(|s| s.text.as_str()).collect();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), c.len());
            for (part, r) in [(&tr, a), (&va, b), (&te, 1.0 - a - b)] {
                let counts = part.class_counts();
                for (label, n) in [n0, n1].into_iter().enumerate() {
                    let want = r * n as f64;
                    prop_assert!((counts[label] as f64 - want).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
