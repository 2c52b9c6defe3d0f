//! Machine-generated text detection trained on embedding perturbations whose
//! distribution is steered online by a reinforcement-learning controller.
//!
//! Pipeline: [`corpus`] texts are encoded by the frozen [`featurizer`], noise
//! from [`perturb`] is injected into the embeddings, the [`detector`] is
//! trained on clean and noisy views, and an [`rl`] agent adjusts the noise
//! parameters from a loss-shaped reward. [`trainer`] runs the training regimes,
//! [`eval`] measures cross-domain accuracy, attack robustness and domain shift.

pub mod cli;
pub mod corpus;
pub mod detector;
mod error;
pub mod eval;
pub mod featurizer;
pub mod nn;
pub mod perturb;
pub mod rl;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
