//! Rays, depth sampling, and volume rendering of one field or of two fields
//! composited under a joint transmittance.

mod camera;
mod field;
mod integrate;
mod rays;

pub use camera::{centered_intrinsics, Camera, Vec3, PACKED_LEN};
pub use field::{
    render_composite, render_composite_rays, render_field, render_field_rays, NeuralField, PointSamples,
    RadianceField, RenderOutput, RENDER_CHUNK,
};
pub use integrate::{
    alpha, composite_render, integrate_composite, integrate_ray, volume_render, CompositeIntegral, RayIntegral,
};
pub use rays::{generate_rays, sample_along_ray, sample_rays, RayBatch, RaySamples, SamplePoints, SamplingConfig};

#[allow(unused_imports)]
pub(crate) use camera::{cross, norm, normalize};
