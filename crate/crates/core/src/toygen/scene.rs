//! The analytic scene family standing in for a face generator, and the
//! occluders that play the out-of-distribution object.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::renderer::{PointSamples, RadianceField, Vec3};
use crate::tensorlab::{sigmoid, Tensor};

/// Peak density of the ellipsoid and of solid occluder interiors.
pub const SIGMA_MAX: f64 = 10.0;
/// Softness of the ellipsoid boundary in units of the quadratic form.
pub const TAU: f64 = 0.25;
/// Latent coordinates with a semantic meaning; the rest are nuisance.
pub const SEMANTIC_DIMS: usize = 10;

const BASE_RADII: Vec3 = [0.5, 0.6, 0.45];
const BASE_COLOR: Vec3 = [0.75, 0.55, 0.45];
const MIN_RADIUS: f64 = 0.05;

/// Ellipsoid parameters decoded from a latent.
///
/// With `m` the mean of the latent's rows:
///
/// | parameter | value |
/// |---|---|
/// | center | `0.1 * m[0..3]` |
/// | radii | `(0.5, 0.6, 0.45) + 0.12 * m[3..6]`, at least 0.05 |
/// | base color | `(0.75, 0.55, 0.45) + 0.15 * m[6..9]` |
/// | vertical color gradient | `-0.15 + 0.1 * m[9]` |
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    pub center: Vec3,
    pub radii: Vec3,
    pub base_color: Vec3,
    pub gradient: f64,
}

impl SceneParams {
    pub fn decode(latent: &Tensor) -> Result<Self> {
        let [rows, dim] = *latent.shape() else {
            return Err(Error::InvalidArgument(format!(
                "latent must be [L, D], got {:?}",
                latent.shape()
            )));
        };
        if rows == 0 || dim < SEMANTIC_DIMS {
            return Err(Error::InvalidArgument(format!(
                "latent needs L >= 1 and D >= {SEMANTIC_DIMS}, got [{rows}, {dim}]"
            )));
        }
        let mean: Vec<f64> = (0..SEMANTIC_DIMS)
            .map(|j| (0..rows).map(|r| latent.data()[r * dim + j]).sum::<f64>() / rows as f64)
            .collect();
        Ok(Self {
            center: std::array::from_fn(|i| 0.1 * mean[i]),
            radii: std::array::from_fn(|i| (BASE_RADII[i] + 0.12 * mean[3 + i]).max(MIN_RADIUS)),
            base_color: std::array::from_fn(|i| BASE_COLOR[i] + 0.15 * mean[6 + i]),
            gradient: -0.15 + 0.1 * mean[9],
        })
    }

    /// Ellipsoid quadratic form, 1 on the nominal surface.
    pub fn quadratic(&self, x: Vec3) -> f64 {
        (0..3).map(|i| ((x[i] - self.center[i]) / self.radii[i]).powi(2)).sum()
    }
}

/// Density and color of the scene at `x`.
pub fn analytic_field(scene: &SceneParams, x: Vec3) -> (Vec3, f64) {
    let sigma = SIGMA_MAX * sigmoid((1.0 - scene.quadratic(x)) / TAU);
    let t = (x[1] - scene.center[1]) / scene.radii[1];
    let color = std::array::from_fn(|i| (scene.base_color[i] + scene.gradient * t).clamp(0.0, 1.0));
    (color, sigma)
}

impl RadianceField for SceneParams {
    fn eval(&self, points: &[f64]) -> Result<PointSamples> {
        let mut out = PointSamples::default();
        for p in points.chunks_exact(3) {
            let (c, s) = analytic_field(self, [p[0], p[1], p[2]]);
            out.sigma.push(s);
            out.color.extend(c);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OccluderShape {
    /// Axis-aligned box with the given half extents (before rotation).
    Box { half: Vec3 },
    /// Torus around the local `z` axis.
    Torus { major: f64, minor: f64 },
}

/// A rigid occluder moving on a small orbit in front of the scene.
///
/// At frame `t` with phase `p = 2 pi t / N`, the center is
/// `anchor + (orbit[0] cos p, orbit[1] sin p, 0)` and the shape is rotated
/// about `z` by `spin * sin p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OccluderParams {
    pub shape: OccluderShape,
    pub color: Vec3,
    /// Width of the linear density ramp across the surface.
    pub boundary: f64,
    pub frames: usize,
    pub anchor: Vec3,
    pub orbit: [f64; 2],
    pub spin: f64,
}

impl OccluderParams {
    pub fn default_box(frames: usize) -> Self {
        Self {
            shape: OccluderShape::Box {
                half: [0.22, 0.22, 0.12],
            },
            color: [0.15, 0.75, 0.25],
            boundary: 0.04,
            frames,
            anchor: [0.0, 0.0, 0.75],
            orbit: [0.3, 0.2],
            spin: 0.4,
        }
    }

    pub fn default_torus(frames: usize) -> Self {
        Self {
            shape: OccluderShape::Torus {
                major: 0.2,
                minor: 0.07,
            },
            ..Self::default_box(frames)
        }
    }

    /// Center and rotation angle at frame `t`.
    pub fn pose(&self, t: usize) -> Result<(Vec3, f64)> {
        if t >= self.frames {
            return Err(Error::InvalidArgument(format!(
                "frame {t} out of range for {} frames",
                self.frames
            )));
        }
        let p = 2.0 * PI * t as f64 / self.frames as f64;
        let center = [
            self.anchor[0] + self.orbit[0] * p.cos(),
            self.anchor[1] + self.orbit[1] * p.sin(),
            self.anchor[2],
        ];
        Ok((center, self.spin * p.sin()))
    }

    fn sdf_local(&self, q: Vec3) -> f64 {
        match self.shape {
            OccluderShape::Box { half } => {
                let d: Vec3 = std::array::from_fn(|i| q[i].abs() - half[i]);
                let outside = d.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                outside + d[0].max(d[1]).max(d[2]).min(0.0)
            }
            OccluderShape::Torus { major, minor } => {
                let ring = (q[0] * q[0] + q[1] * q[1]).sqrt() - major;
                (ring * ring + q[2] * q[2]).sqrt() - minor
            }
        }
    }
}

/// Density and color of the occluder at frame `t`. Density is `SIGMA_MAX`
/// wherever the signed distance is below `-boundary / 2` and falls linearly
/// to zero at `+boundary / 2`.
pub fn analytic_occluder(occ: &OccluderParams, t: usize, x: Vec3) -> Result<(Vec3, f64)> {
    let (center, angle) = occ.pose(t)?;
    Ok((occ.color, occluder_density(occ, center, angle, x)))
}

fn occluder_density(occ: &OccluderParams, center: Vec3, angle: f64, x: Vec3) -> f64 {
    let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
    let (s, c) = angle.sin_cos();
    // Inverse rotation into the occluder frame.
    let q = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
    let sdf = occ.sdf_local(q);
    SIGMA_MAX * (0.5 - sdf / occ.boundary).clamp(0.0, 1.0)
}

/// The occluder at a fixed frame, as a radiance field.
#[derive(Clone, Copy, Debug)]
pub struct OccluderField {
    pub occluder: OccluderParams,
    center: Vec3,
    angle: f64,
}

impl OccluderField {
    pub fn new(occluder: OccluderParams, t: usize) -> Result<Self> {
        let (center, angle) = occluder.pose(t)?;
        Ok(Self {
            occluder,
            center,
            angle,
        })
    }
}

impl RadianceField for OccluderField {
    fn eval(&self, points: &[f64]) -> Result<PointSamples> {
        let mut out = PointSamples::default();
        for p in points.chunks_exact(3) {
            out.sigma.push(occluder_density(&self.occluder, self.center, self.angle, [p[0], p[1], p[2]]));
            out.color.extend(self.occluder.color);
        }
        Ok(out)
    }
}

/// Scene and occluder in one medium: densities add and colors mix in
/// proportion to density.
pub struct MixedField {
    pub scene: SceneParams,
    pub occluder: Option<OccluderField>,
}

impl RadianceField for MixedField {
    fn eval(&self, points: &[f64]) -> Result<PointSamples> {
        let mut out = self.scene.eval(points)?;
        let Some(occ) = &self.occluder else {
            return Ok(out);
        };
        let o = occ.eval(points)?;
        for i in 0..out.sigma.len() {
            let (ss, so) = (out.sigma[i], o.sigma[i]);
            let total = ss + so;
            if so > 0.0 && total > 0.0 {
                for ch in 0..3 {
                    out.color[i * 3 + ch] = (ss * out.color[i * 3 + ch] + so * o.color[i * 3 + ch]) / total;
                }
            }
            out.sigma[i] = total;
        }
        Ok(out)
    }
}

/// Names of the latent directions with a known effect on the scene.
pub const KNOWN_DIRECTIONS: [&str; 2] = ["color", "radius"];

/// Unit `[L, D]` direction for a known semantic axis, applied equally to
/// every row. `radius` grows all three radii; `color` shifts the base color
/// toward red and away from blue.
pub fn semantic_direction(name: &str, rows: usize, dim: usize) -> Result<Tensor> {
    if dim < SEMANTIC_DIMS || rows == 0 {
        return Err(Error::InvalidArgument(format!(
            "latent shape [{rows}, {dim}] has no semantic axes"
        )));
    }
    let entries: &[(usize, f64)] = match name {
        "radius" => &[(3, 1.0), (4, 1.0), (5, 1.0)],
        "color" => &[(6, 1.0), (8, -1.0)],
        _ => {
            return Err(Error::UnknownDirection {
                name: name.to_string(),
                available: KNOWN_DIRECTIONS.join(", "),
            })
        }
    };
    let norm = ((entries.len() * rows) as f64).sqrt();
    let mut t = Tensor::zeros(&[rows, dim]);
    for r in 0..rows {
        for &(j, v) in entries {
            t.data_mut()[r * dim + j] = v / norm;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneParams {
        SceneParams::decode(&Tensor::zeros(&[4, 16])).unwrap()
    }

    #[test]
    fn density_examples() {
        let s = scene();
        let (_, at_center) = analytic_field(&s, s.center);
        assert!((at_center - SIGMA_MAX * sigmoid(1.0 / TAU)).abs() < 1e-12);
        let (_, far) = analytic_field(&s, [5.0, 5.0, 5.0]);
        assert!(far < 1e-100);
        let (_, surface) = analytic_field(&s, [s.radii[0], 0.0, 0.0]);
        assert_eq!(surface, SIGMA_MAX / 2.0);
    }

    #[test]
    fn decode_is_affine_per_group() {
        let mut w = Tensor::zeros(&[4, 16]);
        let base = SceneParams::decode(&w).unwrap();
        for r in 0..4 {
            w.data_mut()[r * 16 + 7] = 1.0;
            w.data_mut()[r * 16 + 12] = 3.0;
        }
        let p = SceneParams::decode(&w).unwrap();
        assert_eq!(p.center, base.center);
        assert_eq!(p.radii, base.radii);
        assert_eq!(p.gradient, base.gradient);
        assert!((p.base_color[1] - base.base_color[1] - 0.15).abs() < 1e-15);
        assert_eq!(p.base_color[0], base.base_color[0]);
    }

    #[test]
    fn radii_stay_positive() {
        let w = Tensor::full(&[2, 16], -100.0);
        let p = SceneParams::decode(&w).unwrap();
        assert!(p.radii.iter().all(|&r| r == MIN_RADIUS));
        assert!(SceneParams::decode(&Tensor::zeros(&[2, 8])).is_err());
    }

    #[test]
    fn occluder_examples() {
        let occ = OccluderParams::default_box(10);
        let (c, a) = occ.pose(3).unwrap();
        assert!(a.abs() > 0.0);
        let (color, inside) = analytic_occluder(&occ, 3, c).unwrap();
        assert_eq!(inside, SIGMA_MAX);
        assert_eq!(color, occ.color);
        assert_eq!(analytic_occluder(&occ, 3, [0.0, 0.0, -2.0]).unwrap().1, 0.0);
        assert!(analytic_occluder(&occ, 10, c).is_err());
        // Frames 0 and N share a pose, so do identical phases.
        let same = OccluderParams { frames: 20, ..occ };
        let x = [0.1, 0.05, 0.7];
        assert_eq!(
            analytic_occluder(&same, 0, x).unwrap(),
            analytic_occluder(&OccluderParams { frames: 10, ..same }, 0, x).unwrap()
        );
        let torus = OccluderParams::default_torus(4);
        let (c, _) = torus.pose(0).unwrap();
        assert_eq!(analytic_occluder(&torus, 0, c).unwrap().1, 0.0);
        assert_eq!(analytic_occluder(&torus, 0, [c[0] + 0.2, c[1], c[2]]).unwrap().1, SIGMA_MAX);
    }

    #[test]
    fn directions_are_unit_and_named() {
        for name in KNOWN_DIRECTIONS {
            let d = semantic_direction(name, 4, 16).unwrap();
            assert!((d.sq_norm() - 1.0).abs() < 1e-15);
        }
        let err = semantic_direction("smile", 4, 16).unwrap_err().to_string();
        assert!(err.contains("radius") && err.contains("color"));
    }

    #[test]
    fn mixed_field_adds_densities() {
        let occ = OccluderField::new(OccluderParams::default_box(4), 0).unwrap();
        let mixed = MixedField {
            scene: scene(),
            occluder: Some(occ),
        };
        let p = [0.0, 0.0, 0.3, occ.center[0], occ.center[1], occ.center[2]];
        let m = mixed.eval(&p).unwrap();
        let s = scene().eval(&p).unwrap();
        let o = occ.eval(&p).unwrap();
        for i in 0..2 {
            assert!((m.sigma[i] - s.sigma[i] - o.sigma[i]).abs() < 1e-12);
        }
        assert_eq!(&m.color[..3], &s.color[..3]);
    }
}
