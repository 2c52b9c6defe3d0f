//! Labeled text corpora: JSONL ingestion, synthetic multi-domain generation and
//! stratified splitting.

mod split;
mod synth;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{split, SplitRatios};
pub use synth::{synth_corpus, word_list, SynthSpec, TEMPLATES};

/// Class label: 0 = human-written, 1 = machine-generated.
pub type Label = u8;

pub const HUMAN: Label = 0;
pub const MACHINE: Label = 1;

/// One labeled text with its domain tag. Field order is the JSONL key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    pub label: Label,
    pub domain: String,
}

impl Sample {
    pub fn new(text: impl Into<String>, label: Label, domain: impl Into<String>) -> Result<Self> {
        let sample = Sample {
            text: text.into(),
            label,
            domain: domain.into(),
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::invalid("empty text"));
        }
        if self.label > 1 {
            return Err(Error::invalid(format!("label {} outside {{0,1}}", self.label)));
        }
        if self.domain.is_empty() {
            return Err(Error::invalid("empty domain"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Self {
        Corpus {
            name: name.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples carrying each label, indexed by label.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0, 0];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    pub fn has_both_classes(&self) -> bool {
        let [h, m] = self.class_counts();
        h > 0 && m > 0
    }

    /// Serialize as JSONL with keys in the order text, label, domain.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }
}

const KEYS: [&str; 3] = ["text", "label", "domain"];

fn parse_record(line: &str, lineno: usize) -> Result<Sample> {
    let err = |message: String| Error::Record {
        line: lineno,
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| err(format!("malformed json ({e})")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| err("expected a json object".into()))?;
    for key in KEYS {
        if !obj.contains_key(key) {
            return Err(err(format!("missing key \"{key}\"")));
        }
    }
    let extra: Vec<&str> = obj
        .keys()
        .map(String::as_str)
        .filter(|k| !KEYS.contains(k))
        .collect();
    if !extra.is_empty() {
        log::warn!("line {lineno}: ignoring extra keys {extra:?}");
    }

    let text = obj["text"]
        .as_str()
        .ok_or_else(|| err("text is not a string".into()))?;
    if text.is_empty() {
        return Err(err("empty text".into()));
    }
    let label = match obj["label"].as_u64() {
        Some(l @ (0 | 1)) => l as Label,
        _ => return Err(err(format!("label {} outside {{0,1}}", obj["label"]))),
    };
    let domain = obj["domain"]
        .as_str()
        .ok_or_else(|| err("domain is not a string".into()))?;
    if domain.is_empty() {
        return Err(err("empty domain".into()));
    }
    Ok(Sample {
        text: text.to_owned(),
        label,
        domain: domain.to_owned(),
    })
}

/// Parse JSONL content; line numbers in errors are 1-based.
pub fn parse_corpus(content: &str, name: &str) -> Result<Corpus> {
    let samples = content
        .lines()
        .enumerate()
        .map(|(i, line)| parse_record(line, i + 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::new(name, samples))
}

pub fn load_corpus(path: impl AsRef<Path>, name: &str) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&content, name)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(corpus.to_jsonl()?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_valid_lines_in_order() {
        let f = write_tmp(
            "{\"text\":\"first one\",\"label\":0,\"domain\":\"a\"}\n{\"text\":\"second\",\"label\":1,\"domain\":\"b\"}\n",
        );
        let c = load_corpus(f.path(), "tmp").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.samples[0].text, "first one");
        assert_eq!(c.samples[1].label, MACHINE);
        assert_eq!(load_corpus(f.path(), "tmp").unwrap(), c);
    }

    #[test]
    fn empty_text_names_line() {
        let f = write_tmp(
            "{\"text\":\"ok\",\"label\":0,\"domain\":\"d\"}\n{\"text\":\"\", \"label\":1, \"domain\":\"d\"}\n",
        );
        let err = load_corpus(f.path(), "tmp").unwrap_err();
        assert_eq!(err.to_string(), "empty text at line 2");
    }

    #[test]
    fn bad_label_and_missing_key() {
        let err = parse_corpus("{\"text\":\"x\",\"label\":2,\"domain\":\"d\"}", "t").unwrap_err();
        assert!(matches!(err, Error::Record { line: 1, .. }), "{err}");
        let err = parse_corpus("{\"text\":\"x\",\"domain\":\"d\"}", "t").unwrap_err();
        assert_eq!(err.to_string(), "missing key \"label\" at line 1");
    }

    #[test]
    fn extra_keys_are_ignored() {
        let c = parse_corpus(
            "{\"text\":\"x\",\"label\":1,\"domain\":\"d\",\"model\":\"gpt\"}",
            "t",
        )
        .unwrap();
        assert_eq!(c.samples[0], Sample::new("x", 1, "d").unwrap());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_corpus("/nonexistent/corpus.jsonl", "x").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn writer_round_trips_with_fixed_key_order() {
        let text = "{\"text\":\"a \\\"quoted\\\" line\",\"label\":1,\"domain\":\"arxiv-chatgpt\"}\n{\"text\":\"b\",\"label\":0,\"domain\":\"x\"}\n";
        let c = parse_corpus(text, "t").unwrap();
        assert_eq!(c.to_jsonl().unwrap(), text);
    }
}
