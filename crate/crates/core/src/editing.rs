//! Post-inversion manipulation: latent edits, OOD removal and novel views.
//!
//! Edits only ever touch latents; OOD removal only changes how the OOD field
//! is rendered. The two commute.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::inversion::{render_reconstruction, sampling_for, InversionCheckpoint};
use crate::renderer::{render_composite, Camera, PointSamples, RadianceField, RenderOutput};
use crate::tensorlab::Tensor;
use crate::toygen::{semantic_direction, Generator, KNOWN_DIRECTIONS};

/// Largest accepted |strength| for registry directions.
pub const DEFAULT_MAX_STRENGTH: f64 = 3.0;

/// A named unit direction in latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct EditDirection {
    pub name: String,
    /// `[L, D]`, unit Frobenius norm.
    pub direction: Tensor,
    pub max_strength: f64,
}

impl EditDirection {
    /// Normalizes `direction`; a `[D]` vector is broadcast to `rows` rows.
    pub fn new(name: &str, direction: Tensor, rows: usize, max_strength: f64) -> Result<Self> {
        let direction = match direction.shape() {
            [d] => Tensor::new(&[rows, *d], direction.data().repeat(rows))?,
            [_, _] => direction,
            s => return Err(Error::InvalidArgument(format!("direction `{name}` has shape {s:?}"))),
        };
        let norm = direction.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!("direction `{name}` has zero or non-finite norm")));
        }
        if !(max_strength > 0.0) {
            return Err(Error::InvalidArgument("max_strength must be positive".into()));
        }
        let data = direction.data().iter().map(|v| v / norm).collect();
        Ok(Self {
            name: name.to_string(),
            direction: Tensor::new(direction.shape(), data)?,
            max_strength,
        })
    }
}

/// `w + strength * dir`. The OOD assets are not involved.
pub fn apply_edit(w: &Tensor, dir: &EditDirection, strength: f64) -> Result<Tensor> {
    if !strength.is_finite() || strength.abs() > dir.max_strength {
        return Err(Error::InvalidArgument(format!(
            "strength {strength} for `{}` is outside [-{m}, {m}]",
            dir.name,
            m = dir.max_strength
        )));
    }
    if w.shape() != dir.direction.shape() {
        return Err(Error::Shape {
            op: "apply_edit",
            lhs: w.shape().to_vec(),
            rhs: dir.direction.shape().to_vec(),
        });
    }
    let data = w
        .data()
        .iter()
        .zip(dir.direction.data())
        .map(|(a, d)| a + strength * d)
        .collect();
    Tensor::new(w.shape(), data)
}

/// Named directions, stored as text:
///
/// ```text
/// shape = 4 16
/// max_strength = 3
/// radius = 0 0 0 0.5 ...
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionRegistry {
    pub rows: usize,
    pub dim: usize,
    pub directions: Vec<EditDirection>,
}

impl DirectionRegistry {
    /// The toy generator's semantic axes.
    pub fn toy(rows: usize, dim: usize) -> Result<Self> {
        let directions = KNOWN_DIRECTIONS
            .iter()
            .map(|n| EditDirection::new(n, semantic_direction(n, rows, dim)?, rows, DEFAULT_MAX_STRENGTH))
            .collect::<Result<_>>()?;
        Ok(Self { rows, dim, directions })
    }

    pub fn names(&self) -> Vec<String> {
        self.directions.iter().map(|d| d.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&EditDirection> {
        self.directions
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::UnknownDirection {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn to_text(&self) -> String {
        let max = self.directions.first().map_or(DEFAULT_MAX_STRENGTH, |d| d.max_strength);
        let mut out = format!("shape = {} {}\nmax_strength = {max:?}\n", self.rows, self.dim);
        for d in &self.directions {
            let vals: Vec<String> = d.direction.data().iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!("{} = {}\n", d.name, vals.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = crate::config::parse_kv(text)?;
        let shape: Vec<usize> = kv
            .remove("shape")
            .ok_or_else(|| Error::Config("direction registry lacks `shape`".into()))?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config("registry `shape` must be two integers".into()))?;
        let [rows, dim] = shape[..] else {
            return Err(Error::Config("registry `shape` must be two integers".into()));
        };
        let max_strength = match kv.remove("max_strength") {
            None => DEFAULT_MAX_STRENGTH,
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("registry `max_strength`: cannot parse `{s}`")))?,
        };
        let directions = kv
            .into_iter()
            .map(|(name, vals)| {
                let v: Vec<f64> = vals
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("direction `{name}` has a non-numeric entry")))?;
                let t = if v.len() == dim {
                    Tensor::new(&[dim], v)?
                } else if v.len() == rows * dim {
                    Tensor::new(&[rows, dim], v)?
                } else {
                    return Err(Error::Config(format!(
                        "direction `{name}` has {} values, expected {dim} or {}",
                        v.len(),
                        rows * dim
                    )));
                };
                EditDirection::new(&name, t, rows, max_strength)
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows, dim, directions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// An OOD field with zero density and zero blend everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct RemovedOod;

impl RadianceField for RemovedOod {
    fn eval(&self, points: &[f64]) -> Result<PointSamples> {
        let n = points.len() / 3;
        Ok(PointSamples {
            sigma: vec![0.0; n],
            color: vec![0.0; n * 3],
            blend: Some(vec![0.0; n]),
        })
    }
}

/// Read-only rendering over an inversion result.
#[derive(Clone, Copy)]
pub struct EditView<'a> {
    pub generator: &'a Generator,
    pub checkpoint: &'a InversionCheckpoint,
    pub ood_removed: bool,
}

impl<'a> EditView<'a> {
    pub fn new(generator: &'a Generator, checkpoint: &'a InversionCheckpoint) -> Self {
        Self {
            generator,
            checkpoint,
            ood_removed: false,
        }
    }

    /// Same view with the OOD field switched off.
    pub fn remove_ood(self) -> Self {
        Self {
            ood_removed: true,
            ..self
        }
    }

    /// Effective latent of frame `t`.
    pub fn latent(&self, t: usize) -> Result<Tensor> {
        self.checkpoint.latent.effective(t)
    }

    /// Low-resolution render of frame `t`'s state with `latent` in place of
    /// its inverted latent.
    pub fn render(&self, t: usize, latent: &Tensor, camera: &Camera, width: usize, height: usize) -> Result<RenderOutput> {
        if t >= self.checkpoint.frames() {
            return Err(Error::InvalidArgument(format!(
                "frame {t} out of range for {} frames",
                self.checkpoint.frames()
            )));
        }
        if !self.ood_removed {
            return render_reconstruction(self.generator, self.checkpoint, t, latent, camera, width, height);
        }
        let planes = self.generator.synthesize(latent)?;
        let sampling = sampling_for(camera, self.generator.config.bound, self.checkpoint.config.samples);
        render_composite(&self.generator.field(&planes), &RemovedOod, camera, width, height, &sampling)
    }

    /// Upsampled render; `width` and `height` are the low-resolution size.
    pub fn render_hr(&self, t: usize, latent: &Tensor, camera: &Camera, width: usize, height: usize) -> Result<Image> {
        let low = self.render(t, latent, camera, width, height)?;
        self.checkpoint.upsampler.apply(&low.color)
    }

    /// Frame `t` from an arbitrary camera, upsampled.
    pub fn render_novel_view(&self, camera: &Camera, t: usize, width: usize, height: usize) -> Result<Image> {
        self.render_hr(t, &self.latent(t)?, camera, width, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_text_round_trip() {
        let r = DirectionRegistry::toy(4, 16).unwrap();
        let back = DirectionRegistry::from_text(&r.to_text()).unwrap();
        assert_eq!(back.names().len(), r.names().len());
        for d in &r.directions {
            assert_eq!(back.get(&d.name).unwrap(), d);
        }
    }

    #[test]
    fn row_vector_broadcasts_and_normalizes() {
        let d = EditDirection::new("x", Tensor::new(&[2], vec![3.0, 4.0]).unwrap(), 2, 1.0).unwrap();
        assert_eq!(d.direction.shape(), &[2, 2]);
        let n: f64 = d.direction.data().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_name_lists_available() {
        let r = DirectionRegistry::toy(4, 16).unwrap();
        let msg = r.get("smile").unwrap_err().to_string();
        for n in KNOWN_DIRECTIONS {
            assert!(msg.contains(n), "{msg}");
        }
    }

    #[test]
    fn strength_outside_range_is_rejected() {
        let r = DirectionRegistry::toy(4, 16).unwrap();
        let d = r.get("radius").unwrap();
        assert!(apply_edit(&Tensor::zeros(&[4, 16]), d, 3.5).is_err());
        assert!(apply_edit(&Tensor::zeros(&[4, 16]), d, f64::NAN).is_err());
    }
}
