use rayon::prelude::*;

use super::camera::Camera;
use super::integrate::{integrate_composite, integrate_ray};
use super::rays::{generate_rays, sample_rays, RayBatch, SamplingConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensorlab::{Graph, Tensor};
use crate::triplane::{decode_in, decode_ood, sample_triplane, MlpDecoder, TriPlane};

/// Rays evaluated per field query during inference renders.
pub const RENDER_CHUNK: usize = 512;

/// Field values at a batch of points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSamples {
    /// `[N]`
    pub sigma: Vec<f64>,
    /// `[N * 3]`
    pub color: Vec<f64>,
    /// `[N]`, present for fields with a blend output.
    pub blend: Option<Vec<f64>>,
}

/// Anything that maps points to density and color, read-only during a render.
pub trait RadianceField: Sync {
    /// `points` holds `N * 3` coordinates.
    fn eval(&self, points: &[f64]) -> Result<PointSamples>;
}

/// A tri-plane plus decoder, with the per-frame latent for OOD heads.
#[derive(Clone, Copy)]
pub struct NeuralField<'a> {
    pub planes: &'a TriPlane,
    pub decoder: &'a MlpDecoder,
    pub phi: Option<&'a Tensor>,
}

impl RadianceField for NeuralField<'_> {
    fn eval(&self, points: &[f64]) -> Result<PointSamples> {
        let g = Graph::new();
        let n = points.len() / 3;
        let planes = g.constant(self.planes.planes.clone());
        let x = g.constant(Tensor::new(&[n, 3], points.to_vec())?);
        let features = sample_triplane(planes, self.planes.geometry, x)?;
        let dec = self.decoder.bind(&g, false);
        let out = match self.phi {
            None => decode_in(features, &dec)?,
            Some(phi) => decode_ood(features, g.constant(phi.clone()), &dec)?,
        };
        Ok(PointSamples {
            sigma: out.sigma.value().data().to_vec(),
            color: out.color.value().data().to_vec(),
            blend: out.blend.map(|b| b.value().data().to_vec()),
        })
    }
}

/// Per-pixel results of a render.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    /// `H x W x 3`
    pub color: Image,
    /// Accumulated blend, `H x W`; zero for single-field renders.
    pub blend: Image,
    pub opacity_in: Image,
    /// Zero for single-field renders.
    pub opacity_ood: Image,
    /// Expected depth, weighted by the sample contributions.
    pub depth: Image,
}

impl RenderOutput {
    fn from_rows(width: usize, height: usize, rows: Vec<[f64; 7]>) -> Self {
        let plane = |i: usize| Image::new(width, height, 1, rows.iter().map(|r| r[i]).collect()).expect("shape");
        Self {
            color: Image::new(width, height, 3, rows.iter().flat_map(|r| [r[0], r[1], r[2]]).collect())
                .expect("shape"),
            blend: plane(3),
            opacity_in: plane(4),
            opacity_ood: plane(5),
            depth: plane(6),
        }
    }
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(RENDER_CHUNK).map(|s| (s, (s + RENDER_CHUNK).min(n))).collect()
}

fn check_len(what: &str, samples: &PointSamples, n: usize) -> Result<()> {
    if samples.sigma.len() != n || samples.color.len() != n * 3 {
        return Err(Error::InvalidArgument(format!(
            "{what} field returned {} densities and {} colors for {n} points",
            samples.sigma.len(),
            samples.color.len()
        )));
    }
    Ok(())
}

/// Render one field along precomputed rays.
pub fn render_field_rays(field: &dyn RadianceField, rays: &RayBatch, sampling: &SamplingConfig) -> Result<RenderOutput> {
    sampling.validate()?;
    let k = sampling.samples;
    let rows: Vec<Vec<[f64; 7]>> = chunk_ranges(rays.len())
        .into_par_iter()
        .map(|(s, e)| {
            let smp = sample_rays(rays, s, e, sampling)?;
            let f = field.eval(&smp.points)?;
            check_len("radiance", &f, smp.rays * k)?;
            Ok((0..smp.rays)
                .map(|r| {
                    let ri = integrate_ray(
                        &f.sigma[r * k..(r + 1) * k],
                        &f.color[r * k * 3..(r + 1) * k * 3],
                        &smp.deltas[r * k..(r + 1) * k],
                        &smp.depths[r * k..(r + 1) * k],
                    );
                    [ri.color[0], ri.color[1], ri.color[2], 0.0, ri.opacity, 0.0, ri.depth]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(RenderOutput::from_rows(rays.width, rays.height, rows.concat()))
}

/// Composite render of two fields along precomputed rays. The OOD field
/// must provide a blend output.
pub fn render_composite_rays(
    field_in: &dyn RadianceField,
    field_ood: &dyn RadianceField,
    rays: &RayBatch,
    sampling: &SamplingConfig,
) -> Result<RenderOutput> {
    sampling.validate()?;
    let k = sampling.samples;
    let rows: Vec<Vec<[f64; 7]>> = chunk_ranges(rays.len())
        .into_par_iter()
        .map(|(s, e)| {
            let smp = sample_rays(rays, s, e, sampling)?;
            let fi = field_in.eval(&smp.points)?;
            let fo = field_ood.eval(&smp.points)?;
            check_len("in-distribution", &fi, smp.rays * k)?;
            check_len("out-of-distribution", &fo, smp.rays * k)?;
            let blend = fo
                .blend
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("out-of-distribution field has no blend output".into()))?;
            Ok((0..smp.rays)
                .map(|r| {
                    let s = r * k..(r + 1) * k;
                    let c = r * k * 3..(r + 1) * k * 3;
                    let ci = integrate_composite(
                        &fi.sigma[s.clone()],
                        &fi.color[c.clone()],
                        &fo.sigma[s.clone()],
                        &fo.color[c],
                        &blend[s.clone()],
                        &smp.deltas[s.clone()],
                        &smp.depths[s],
                    );
                    [ci.color[0], ci.color[1], ci.color[2], ci.blend, ci.opacity_in, ci.opacity_ood, ci.depth]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(RenderOutput::from_rows(rays.width, rays.height, rows.concat()))
}

pub fn render_field(
    field: &dyn RadianceField,
    camera: &Camera,
    width: usize,
    height: usize,
    sampling: &SamplingConfig,
) -> Result<RenderOutput> {
    render_field_rays(field, &generate_rays(camera, width, height)?, sampling)
}

pub fn render_composite(
    field_in: &dyn RadianceField,
    field_ood: &dyn RadianceField,
    camera: &Camera,
    width: usize,
    height: usize,
    sampling: &SamplingConfig,
) -> Result<RenderOutput> {
    render_composite_rays(field_in, field_ood, &generate_rays(camera, width, height)?, sampling)
}
