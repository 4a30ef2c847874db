//! Composite volumetric decomposition for inverting and editing multi-view
//! video with a frozen latent-conditioned radiance field prior.

pub mod config;
pub mod editing;
pub mod error;
pub mod image;
pub mod inversion;
pub mod losses;
pub mod metrics;
pub mod renderer;
pub mod tensorlab;
pub mod toygen;
pub mod triplane;

pub use error::{Error, Result};
pub use tensorlab::{Graph, Tensor, Var};
