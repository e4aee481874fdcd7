//! Dense network kernel, Adam, and seeded randomness.

pub mod adam;
pub mod mlp;
pub mod rng;

pub use adam::{Adam, AdamConfig};
pub use mlp::{hcat, sigmoid, Activation, Dense, Gradients, LayerGrad, Mlp, Trace};
pub use rng::{seeded, stream, Rng};
