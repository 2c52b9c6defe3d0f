//! Evasion attacks applied to machine-generated text at evaluation time.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Lexicon;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Synonym,
    ParaphraseSurrogate,
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synonym" => Ok(AttackKind::Synonym),
            "paraphrase" | "paraphrase_surrogate" => Ok(AttackKind::ParaphraseSurrogate),
            other => Err(Error::invalid(format!("unknown attack {other:?} (expected synonym|paraphrase)"))),
        }
    }
}

/// Rates of the rule-based paraphrase stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRates {
    pub synonym_ratio: f64,
    pub delete_rate: f64,
    /// Fraction of 3-token windows that get shuffled.
    pub swap_rate: f64,
}

impl Default for ParaphraseRates {
    fn default() -> Self {
        ParaphraseRates {
            synonym_ratio: 0.35,
            delete_rate: 0.1,
            swap_rate: 0.15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub ratio: f64,
    pub lexicon: Arc<Lexicon>,
    pub seed: u64,
    pub paraphrase: ParaphraseRates,
}

impl AttackConfig {
    pub fn synonym(ratio: f64, seed: u64) -> Self {
        AttackConfig {
            kind: AttackKind::Synonym,
            ratio,
            lexicon: Lexicon::bundled(),
            seed,
            paraphrase: ParaphraseRates::default(),
        }
    }

    pub fn paraphrase(seed: u64) -> Self {
        AttackConfig {
            kind: AttackKind::ParaphraseSurrogate,
            ..Self::synonym(0.2, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.paraphrase;
        for (name, v) in [("ratio", self.ratio), ("synonym_ratio", p.synonym_ratio), ("swap_rate", p.swap_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("attack {name} {v} outside [0,1]")));
            }
        }
        // keeps at least 60% of the tokens
        if !(0.0..=0.4).contains(&p.delete_rate) {
            return Err(Error::invalid(format!("delete_rate {} outside [0,0.4]", p.delete_rate)));
        }
        Ok(())
    }
}

fn count_for(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 1e-9).floor() as usize
}

/// Byte ranges of the alphanumeric runs in `text`.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn replace_synonyms(text: &str, lexicon: &Lexicon, ratio: f64, rng: &mut Stream) -> String {
    let spans = word_spans(text);
    let eligible: Vec<(usize, usize, &[String])> = spans
        .iter()
        .filter_map(|&(s, e)| lexicon.synonyms(&text[s..e].to_lowercase()).map(|syn| (s, e, syn)))
        .collect();
    let k = count_for(ratio, eligible.len());
    if k == 0 {
        return text.to_owned();
    }
    let mut chosen: Vec<usize> = sample(rng, eligible.len(), k).into_vec();
    chosen.sort_unstable();
    let mut out = String::with_capacity(text.len() + 16);
    let mut cursor = 0;
    for i in chosen {
        let (s, e, syns) = eligible[i];
        let pick = &syns[rng.random_range(0..syns.len())];
        out.push_str(&text[cursor..s]);
        out.push_str(pick);
        cursor = e;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Replace exactly `floor(ratio * m)` of the `m` lexicon-covered tokens,
/// chosen uniformly, each by a uniformly chosen synonym. Everything else in
/// the text is preserved byte for byte.
pub fn synonym_attack(text: &str, config: &AttackConfig, rng: &mut Stream) -> String {
    replace_synonyms(text, &config.lexicon, config.ratio, rng)
}

/// Rule-based paraphrase: synonym replacement, random token deletion, then
/// shuffling inside randomly chosen 3-token windows.
pub fn paraphrase_surrogate(text: &str, config: &AttackConfig, rng: &mut Stream) -> String {
    let rates = config.paraphrase;
    let replaced = replace_synonyms(text, &config.lexicon, rates.synonym_ratio, rng);
    let mut tokens: Vec<&str> = replaced.split_whitespace().collect();
    let n = tokens.len();

    let n_delete = count_for(rates.delete_rate, n);
    let windows = tokens.len().saturating_sub(n_delete) / 3;
    let n_swap = count_for(rates.swap_rate, windows);
    if n_delete == 0 && n_swap == 0 {
        return replaced;
    }
    if n_delete > 0 {
        let mut drop = vec![false; n];
        for i in sample(rng, n, n_delete) {
            drop[i] = true;
        }
        let mut i = 0;
        tokens.retain(|_| {
            let keep = !drop[i];
            i += 1;
            keep
        });
    }
    if n_swap > 0 {
        for w in sample(rng, windows, n_swap) {
            tokens[3 * w..3 * w + 3].shuffle(rng);
        }
    }
    tokens.join(" ")
}

pub fn apply_attack(text: &str, config: &AttackConfig, rng: &mut Stream) -> String {
    match config.kind {
        AttackKind::Synonym => synonym_attack(text, config, rng),
        AttackKind::ParaphraseSurrogate => paraphrase_surrogate(text, config, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurizer::tokenize;
    use crate::rng::substream;
    use std::collections::BTreeMap;

    fn toy_lexicon() -> Arc<Lexicon> {
        let mut m = BTreeMap::new();
        for w in ["alpha", "beta", "gamma", "delta", "omega"] {
            m.insert(w.to_string(), vec![format!("{w}x"), format!("{w}y")]);
        }
        Arc::new(Lexicon::from_map(m).unwrap())
    }

    fn config(ratio: f64) -> AttackConfig {
        AttackConfig {
            lexicon: toy_lexicon(),
            ..AttackConfig::synonym(ratio, 0)
        }
    }

    #[test]
    fn replaces_exact_count() {
        let text = "alpha beta gamma delta omega, alpha beta gamma delta omega plus filler";
        let out = synonym_attack(text, &config(0.2), &mut substream(1, "attack"));
        let a = tokenize(text);
        let b = tokenize(&out);
        assert_eq!(a.len(), b.len());
        let changed = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert_eq!(changed, 2);
        assert!(out.contains(','));
    }

    #[test]
    fn no_eligible_tokens_is_identity() {
        let text = "Nothing here, matches!";
        assert_eq!(synonym_attack(text, &config(1.0), &mut substream(1, "attack")), text);
    }

    #[test]
    fn full_ratio_changes_every_eligible_token() {
        let text = "alpha and beta and gamma";
        let out = synonym_attack(text, &config(1.0), &mut substream(2, "attack"));
        for (a, b) in tokenize(text).iter().zip(tokenize(&out)) {
            assert_eq!(toy_lexicon().contains(a), *a != b);
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let text = "alpha beta gamma delta omega";
        let cfg = config(0.6);
        assert_eq!(
            synonym_attack(text, &cfg, &mut substream(5, "attack")),
            synonym_attack(text, &cfg, &mut substream(5, "attack"))
        );
        let para = AttackConfig { kind: AttackKind::ParaphraseSurrogate, ..cfg };
        assert_eq!(
            paraphrase_surrogate(text, &para, &mut substream(5, "attack")),
            paraphrase_surrogate(text, &para, &mut substream(5, "attack"))
        );
    }

    #[test]
    fn zero_rate_paraphrase_is_identity() {
        let text = "alpha,  beta gamma delta omega and more words here";
        let cfg = AttackConfig {
            paraphrase: ParaphraseRates { synonym_ratio: 0.0, delete_rate: 0.0, swap_rate: 0.0 },
            ..config(0.2)
        };
        assert_eq!(paraphrase_surrogate(text, &cfg, &mut substream(3, "attack")), text);
    }

    #[test]
    fn paraphrase_keeps_most_tokens() {
        let text = "alpha beta gamma delta omega ".repeat(8);
        let cfg = AttackConfig { kind: AttackKind::ParaphraseSurrogate, ..config(0.2) };
        let out = paraphrase_surrogate(&text, &cfg, &mut substream(4, "attack"));
        let n_in = tokenize(&text).len();
        let n_out = tokenize(&out).len();
        assert!(n_out as f64 >= 0.6 * n_in as f64);
        assert_eq!(n_out, n_in - 4);
    }

    #[test]
    fn validation() {
        assert!(config(1.5).validate().is_err());
        let mut c = config(0.2);
        c.paraphrase.delete_rate = 0.5;
        assert!(c.validate().is_err());
        assert!("paraphrase".parse::<AttackKind>().is_ok());
        assert!("llm".parse::<AttackKind>().is_err());
    }
}
