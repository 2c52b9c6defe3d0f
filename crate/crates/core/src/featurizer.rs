//! Frozen text encoder: lowercase word tokens looked up in a seeded, hashed
//! Gaussian embedding table.
//!
//! The table is built once per configuration and shared read-only; nothing in
//! the crate can mutate it after construction.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub embed_dim: usize,
    pub max_tokens: usize,
    pub hash_seed: u64,
    pub table_size: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            embed_dim: 64,
            max_tokens: 128,
            hash_seed: 0x00C0_FFEE,
            table_size: 65536,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::invalid("embed_dim must be at least 2"));
        }
        if self.max_tokens < 3 {
            return Err(Error::invalid("max_tokens must be at least 3"));
        }
        if self.table_size < 1024 {
            return Err(Error::invalid("table_size must be at least 1024"));
        }
        Ok(())
    }
}

/// Dense row-major `rows x cols` matrix; one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(EmbeddingMatrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Column means over the token rows.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Lowercase, split on anything that is not alphanumeric; separators are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

struct Table {
    values: Vec<f64>,
    checksum: String,
}

static TABLES: LazyLock<Mutex<HashMap<FeaturizerConfig, Arc<Table>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

fn build_table(config: &FeaturizerConfig) -> Table {
    let d = config.embed_dim;
    let mut rng = substream(config.hash_seed, "featurizer/table");
    let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("positive std");
    let values: Vec<f64> = (0..config.table_size * d).map(|_| normal.sample(&mut rng)).collect();
    let checksum = table_checksum(&values);
    Table { values, checksum }
}

fn table_checksum(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Handle to the shared frozen table for one configuration.
#[derive(Clone)]
pub struct Featurizer {
    config: FeaturizerConfig,
    table: Arc<Table>,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer")
            .field("config", &self.config)
            .field("checksum", &self.table.checksum)
            .finish()
    }
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig) -> Result<Self> {
        config.validate()?;
        let mut tables = TABLES.lock().expect("featurizer cache poisoned");
        let table = tables
            .entry(config)
            .or_insert_with(|| Arc::new(build_table(&config)))
            .clone();
        Ok(Featurizer { config, table })
    }

    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn token_index(&self, token: &str) -> usize {
        (xxh3_64_with_seed(token.as_bytes(), self.config.hash_seed) % self.config.table_size as u64) as usize
    }

    pub fn token_row(&self, token: &str) -> &[f64] {
        let d = self.config.embed_dim;
        let i = self.token_index(token);
        &self.table.values[i * d..(i + 1) * d]
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingMatrix> {
        if text.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid(format!("text {text:?} contains no tokens")));
        }
        tokens.truncate(self.config.max_tokens);
        let d = self.config.embed_dim;
        let mut values = Vec::with_capacity(tokens.len() * d);
        for t in &tokens {
            values.extend_from_slice(self.token_row(t));
        }
        EmbeddingMatrix::from_vec(tokens.len(), d, values)
    }

    /// SHA-256 of the table captured at construction.
    pub fn checksum(&self) -> &str {
        &self.table.checksum
    }

    /// Recompute the table digest from its current contents.
    pub fn recompute_checksum(&self) -> String {
        table_checksum(&self.table.values)
    }
}

pub fn embed(text: &str, config: &FeaturizerConfig) -> Result<EmbeddingMatrix> {
    Featurizer::new(*config)?.embed(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FeaturizerConfig {
        FeaturizerConfig {
            table_size: 4096,
            ..Default::default()
        }
    }

    #[test]
    fn tokenizer_contract() {
        assert_eq!(tokenize("Hello, world"), vec!["hello", "world"]);
        assert_eq!(tokenize("  don't-stop!! "), vec!["don", "t", "stop"]);
        let e = embed("Hello, world", &small()).unwrap();
        assert_eq!((e.rows(), e.cols()), (2, 64));
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = embed("the cat sat", &small()).unwrap();
        let b = embed("the cat sat", &small()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn repeated_tokens_give_identical_rows() {
        let e = embed("a a a", &small()).unwrap();
        assert_eq!(e.rows(), 3);
        assert_eq!(e.row(0), e.row(1));
        assert_eq!(e.row(1), e.row(2));
    }

    #[test]
    fn truncates_at_max_tokens() {
        let cfg = FeaturizerConfig { max_tokens: 3, ..small() };
        let e = embed("one two three four five", &cfg).unwrap();
        assert_eq!(e.rows(), 3);
    }

    #[test]
    fn rejects_empty_and_tokenless_text() {
        assert!(embed("", &small()).is_err());
        assert!(embed("?!", &small()).is_err());
        assert!(FeaturizerConfig { embed_dim: 1, ..small() }.validate().is_err());
        assert!(FeaturizerConfig { table_size: 100, ..small() }.validate().is_err());
    }

    #[test]
    fn row_norms_match_unit_variance_budget() {
        let f = Featurizer::new(small()).unwrap();
        let mean_sq: f64 = (0..2000)
            .map(|i| f.token_row(&format!("tok{i}")).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / 2000.0;
        assert!((0.8..=1.2).contains(&mean_sq), "{mean_sq}");
    }

    #[test]
    fn hash_seed_changes_nearly_all_values() {
        let a = embed("some fixed text with several words", &small()).unwrap();
        let b = embed(
            "some fixed text with several words",
            &FeaturizerConfig { hash_seed: 99, ..small() },
        )
        .unwrap();
        let changed = a.values().iter().zip(b.values()).filter(|(x, y)| x != y).count();
        assert!(changed as f64 >= 0.99 * a.values().len() as f64);
    }

    #[test]
    fn checksum_is_stable() {
        let f = Featurizer::new(small()).unwrap();
        assert_eq!(f.checksum(), f.recompute_checksum());
    }
}
