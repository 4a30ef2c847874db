//! Three-stage inversion of an occluded monocular video: per-frame latents
//! under the frozen generator, then a free out-of-distribution field blended
//! with it, then upsampler finetuning.

mod assets;
mod config;
mod latent;
mod pipeline;
mod upsampler;

pub use assets::{GroupHashes, InversionCheckpoint, OodAssets, Stage, StageLosses};
pub use config::{PipelineConfig, DEFAULT_CLIP_NORM};
pub use latent::LatentCode;
pub use pipeline::{render_reconstruction, sampling_for, FrameData, Pipeline, StageBTerms, StageReport};
pub use upsampler::{Upsampler, UPSAMPLE_FACTOR};
