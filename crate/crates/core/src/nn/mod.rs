//! Small dense networks with hand-written reverse mode, an Adam optimizer and
//! finite-difference gradient checking.

mod adam;
pub mod gradcheck;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{soft_update, Activation, Dense, ForwardCache, Gradients, Mlp};
