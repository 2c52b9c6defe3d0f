use std::io::Write;
use std::time::Instant;

use crate::corpus::Corpus;
use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::featurizer::Featurizer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingResult {
    pub samples: usize,
    pub total_seconds: f64,
    pub mean_seconds: f64,
}

pub const TIMING_HEADER: &str = "manifest,corpus,samples,total_seconds,mean_seconds";

impl TimingResult {
    pub fn csv_row(&self, manifest: &str, corpus: &str) -> String {
        format!("{manifest},{corpus},{},{},{}", self.samples, self.total_seconds, self.mean_seconds)
    }
}

/// Sequential wall-clock time of embed, extract and predict over the corpus.
pub fn timing_bench(model: &DetectorModel, corpus: &Corpus) -> Result<TimingResult> {
    if corpus.is_empty() {
        return Err(Error::invalid("timing needs at least one sample"));
    }
    let featurizer = Featurizer::new(model.featurizer)?;
    let mut sink = 0.0;
    let start = Instant::now();
    for s in &corpus.samples {
        let e = featurizer.embed(&s.text)?;
        sink += model.predict(&model.extract(&e)?)?[1];
    }
    let total = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    Ok(TimingResult {
        samples: corpus.len(),
        total_seconds: total,
        mean_seconds: total / corpus.len() as f64,
    })
}

/// `domain,label,z1..zk`, one row per sample in corpus order.
pub fn export_features(model: &DetectorModel, corpus: &Corpus, out: &mut dyn Write) -> Result<()> {
    let featurizer = Featurizer::new(model.featurizer)?;
    let io = |e| Error::io("feature csv", e);
    let header: Vec<String> = (1..=model.repr_dim()).map(|j| format!("z{j}")).collect();
    writeln!(out, "domain,label,{}", header.join(",")).map_err(io)?;
    for s in &corpus.samples {
        let z = model.extract(&featurizer.embed(&s.text)?)?;
        let cols: Vec<String> = z.iter().map(f64::to_string).collect();
        writeln!(out, "{},{},{}", csv_field(&s.domain), s.label, cols.join(",")).map_err(io)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
