//! Synthetic stand-in for a pretrained face generator: an analytic scene
//! family, a small learned generator fitted to it, and video datasets
//! rendered from the analytic oracle.

mod scene;

pub use scene::{
    analytic_field, analytic_occluder, semantic_direction, MixedField, OccluderField, OccluderParams, OccluderShape,
    SceneParams, KNOWN_DIRECTIONS, SEMANTIC_DIMS, SIGMA_MAX, TAU,
};

mod generator;

pub use generator::{
    pretrain_generator, sample_latent, Generator, GeneratorConfig, GeneratorVars, PretrainConfig, PretrainReport,
    BASIS_LEN, ROW_SPREAD,
};

mod dataset;

pub use dataset::{generate_dataset, DatasetBundle, DatasetConfig, FrameRecord, OccluderKind, MASK_THRESHOLD};
