//! dglab: a desk-scale laboratory for discriminator-guided score-based
//! diffusion. Analytic Gaussian-mixture targets with closed-form scores,
//! trainable discriminators under cross-entropy vs. gradient-matching
//! objectives, guided reverse-SDE sampling, and harnesses that exercise the
//! known failure modes of cross-entropy-trained guidance.

pub mod error;
pub mod eval;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod mixture;
pub mod presets;
pub mod quad;
pub mod train;
pub mod cli;
pub mod config;
pub mod disc;
pub mod sde;

pub use error::{Error, Result};
