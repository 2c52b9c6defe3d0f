use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use crate::error::{Error, Result};
use crate::featurizer::tokenize;

static BUNDLED_JSON: &str = include_str!("../../data/lexicon_en.json");

static BUNDLED: LazyLock<Arc<Lexicon>> =
    LazyLock::new(|| Arc::new(Lexicon::from_json(BUNDLED_JSON).expect("bundled lexicon is valid")));

/// Token -> synonym list. Keys and synonyms are single lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// English lexicon derived from WordNet, shipped with the crate.
    pub fn bundled() -> Arc<Lexicon> {
        BUNDLED.clone()
    }

    pub fn from_map(map: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (key, synonyms) in map {
            let k = single_token(&key).ok_or_else(|| Error::invalid(format!("lexicon key {key:?} is not a single token")))?;
            if synonyms.is_empty() {
                return Err(Error::invalid(format!("lexicon entry {key:?} has no synonyms")));
            }
            let syns = synonyms
                .iter()
                .map(|s| single_token(s).ok_or_else(|| Error::invalid(format!("synonym {s:?} of {key:?} is not a single token"))))
                .collect::<Result<Vec<_>>>()?;
            entries.insert(k, syns);
        }
        Ok(Lexicon { entries })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        Self::from_map(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }

    pub fn synonyms(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn single_token(s: &str) -> Option<String> {
    let mut t = tokenize(s);
    (t.len() == 1).then(|| t.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_loads() {
        let lex = Lexicon::bundled();
        assert!(lex.len() >= 1900);
        assert!(lex.words().all(|w| !lex.synonyms(w).unwrap().is_empty()));
        for stop in ["the", "of", "and", "to", "in", "that", "was", "for", "with", "is"] {
            assert!(!lex.contains(stop), "{stop}");
        }
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(Lexicon::from_json(r#"{"big": []}"#).is_err());
        assert!(Lexicon::from_json(r#"{"big": ["very large"]}"#).is_err());
        let lex = Lexicon::from_json(r#"{"Big": ["Large", "huge"]}"#).unwrap();
        assert_eq!(lex.synonyms("big").unwrap(), ["large", "huge"]);
    }
}
