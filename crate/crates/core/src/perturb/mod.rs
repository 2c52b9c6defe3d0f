//! Embedding-space noise (the training-time perturbation) and text-space
//! attacks (the evaluation-time perturbation).

mod attack;
mod lexicon;
mod noise;

pub use attack::{apply_attack, paraphrase_surrogate, synonym_attack, AttackConfig, AttackKind, ParaphraseRates};
pub use lexicon::Lexicon;
pub use noise::{inject, sample_noise, NoiseBounds, NoiseFamily, NoiseState};
