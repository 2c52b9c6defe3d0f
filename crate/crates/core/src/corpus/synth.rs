//! Controllable multi-domain toy corpora.
//!
//! Each domain owns a disjoint slice of a shared content vocabulary, so moving
//! between domains shifts the token distribution. Within a domain the two
//! classes share the vocabulary but differ in how concentrated their Zipf
//! distribution is and in how regularly they reuse sentence templates; the
//! machine class uses the higher exponent and the more peaked template mix.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{Corpus, Sample, HUMAN, MACHINE};
use crate::error::{Error, Result};
use crate::perturb::Lexicon;
use crate::rng::{substream, Stream};

/// Sentence templates; `_` marks a content slot.
pub const TEMPLATES: [&str; 5] = [
    "the _ of the _ is _",
    "_ and _ _ to the _",
    "in _ _ that _ was _",
    "_ _ _ for _ with _",
    "_ _ _ _",
];

const WORD_ORDER_SEED: u64 = 0x005E_ED0F_70C3;

static WORDS: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut words: Vec<String> = Lexicon::bundled().words().cloned().collect();
    words.sort_by_key(|w| (xxh3_64_with_seed(w.as_bytes(), WORD_ORDER_SEED), w.clone()));
    words
});

/// Content vocabulary shared by all synthetic domains, in a fixed pseudo-random
/// order. Every word is a key of the bundled synonym lexicon, so synthetic text
/// is attackable by synonym replacement.
pub fn word_list() -> &'static [String] {
    &WORDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub domains: Vec<String>,
    /// Content words per domain.
    pub vocab_size: usize,
    /// Zipf exponent indexed by label.
    pub zipf_exponent: [f64; 2],
    /// Template probabilities indexed by label; one weight per entry of [`TEMPLATES`].
    pub template_mix: [Vec<f64>; 2],
    pub samples_per_class: usize,
    /// Inclusive token-length range.
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// The two-domain setup used by the benchmarks and acceptance suite.
    pub fn bundled() -> Self {
        SynthSpec {
            domains: vec!["source".into(), "target".into()],
            vocab_size: 300,
            zipf_exponent: [1.1, 1.6],
            template_mix: [
                vec![0.2, 0.2, 0.2, 0.2, 0.2],
                vec![0.55, 0.25, 0.1, 0.05, 0.05],
            ],
            samples_per_class: 200,
            min_len: 20,
            max_len: 40,
            seed: 2024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::invalid("synth spec needs at least one domain"));
        }
        for (i, d) in self.domains.iter().enumerate() {
            if d.is_empty() {
                return Err(Error::invalid("empty domain tag"));
            }
            if self.domains[..i].contains(d) {
                return Err(Error::invalid(format!("duplicate domain tag {d:?}")));
            }
        }
        if self.vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        let needed = self.vocab_size * self.domains.len();
        if needed > word_list().len() {
            return Err(Error::invalid(format!(
                "{} domains x vocab_size {} exceeds the {} available content words",
                self.domains.len(),
                self.vocab_size,
                word_list().len()
            )));
        }
        for (label, &s) in self.zipf_exponent.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("zipf exponent for class {label} must be positive")));
            }
        }
        for (label, mix) in self.template_mix.iter().enumerate() {
            if mix.len() != TEMPLATES.len() {
                return Err(Error::invalid(format!(
                    "template mix for class {label} has {} weights, expected {}",
                    mix.len(),
                    TEMPLATES.len()
                )));
            }
            if mix.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(Error::invalid(format!("template mix for class {label} has a negative weight")));
            }
            let sum: f64 = mix.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("template mix for class {label} sums to {sum}, not 1")));
            }
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid("samples_per_class must be positive"));
        }
        if self.min_len < 3 {
            return Err(Error::invalid("min_len must be at least 3 tokens"));
        }
        if self.min_len > self.max_len {
            return Err(Error::invalid("min_len exceeds max_len"));
        }
        Ok(())
    }
}

struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|r| {
                acc += (r as f64).powf(-exponent);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        Zipf { cdf }
    }

    fn sample(&self, rng: &mut Stream) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

fn pick(weights: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn generate_text(
    vocab: &[String],
    zipf: &Zipf,
    mix: &[f64],
    len: usize,
    rng: &mut Stream,
) -> String {
    let mut tokens: Vec<&str> = Vec::with_capacity(len + 8);
    while tokens.len() < len {
        let template = TEMPLATES[pick(mix, rng)];
        for slot in template.split(' ') {
            if slot == "_" {
                tokens.push(&vocab[zipf.sample(rng)]);
            } else {
                tokens.push(slot);
            }
        }
    }
    tokens.truncate(len);
    tokens.join(" ")
}

/// Generate one corpus per domain; a pure function of `spec`.
pub fn synth_corpus(spec: &SynthSpec) -> Result<BTreeMap<String, Corpus>> {
    spec.validate()?;
    let words = word_list();
    let zipfs = [
        Zipf::new(spec.vocab_size, spec.zipf_exponent[0]),
        Zipf::new(spec.vocab_size, spec.zipf_exponent[1]),
    ];
    let mut out = BTreeMap::new();
    for (d, domain) in spec.domains.iter().enumerate() {
        let vocab = &words[d * spec.vocab_size..(d + 1) * spec.vocab_size];
        let mut rng = substream(spec.seed, &format!("synth/{domain}"));
        let mut samples = Vec::with_capacity(2 * spec.samples_per_class);
        for _ in 0..spec.samples_per_class {
            for label in [HUMAN, MACHINE] {
                let len = rng.random_range(spec.min_len..=spec.max_len);
                let l = label as usize;
                let text = generate_text(vocab, &zipfs[l], &spec.template_mix[l], len, &mut rng);
                samples.push(Sample {
                    text,
                    label,
                    domain: domain.clone(),
                });
            }
        }
        out.insert(domain.clone(), Corpus::new(domain.clone(), samples));
    }
    Ok(out)
}
