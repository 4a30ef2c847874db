use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::{norm, Camera, Vec3};
use crate::error::{Error, Result};

/// One ray per pixel, row-major pixel order.
#[derive(Clone, Debug, PartialEq)]
pub struct RayBatch {
    pub width: usize,
    pub height: usize,
    pub origins: Vec<Vec3>,
    pub directions: Vec<Vec3>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Rays through pixel centers. Pixel `(x, y)` sits at normalized image
/// coordinates `((x + 0.5) / W, (y + 0.5) / H)`.
pub fn generate_rays(camera: &Camera, width: usize, height: usize) -> Result<RayBatch> {
    camera.validate()?;
    let kinv = camera.inverse_intrinsics()?;
    let m = &camera.cam2world;
    let origin = camera.origin();
    let mut directions = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let p = [(x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64, 1.0];
            let d_cam: Vec3 = std::array::from_fn(|r| kinv[r][0] * p[0] + kinv[r][1] * p[1] + kinv[r][2] * p[2]);
            let d: Vec3 = std::array::from_fn(|r| m[r][0] * d_cam[0] + m[r][1] * d_cam[1] + m[r][2] * d_cam[2]);
            let n = norm(d);
            directions.push([d[0] / n, d[1] / n, d[2] / n]);
        }
    }
    Ok(RayBatch {
        width,
        height,
        origins: vec![origin; width * height],
        directions,
    })
}

/// Depth sampling along every ray of a render.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    pub jitter: bool,
    pub seed: u64,
    /// When set, each ray's range is further clipped to the cube
    /// `[-s, s]^3`; rays missing the cube get zero-length intervals.
    pub clip_bound: Option<f64>,
}

impl SamplingConfig {
    /// Midpoint sampling over `[near, far]`.
    pub fn uniform(near: f64, far: f64, samples: usize) -> Self {
        Self {
            near,
            far,
            samples,
            jitter: false,
            seed: 0,
            clip_bound: None,
        }
    }

    /// Depth range covering the cube `[-bound, bound]^3` from any viewing
    /// direction of `camera`, clipped per ray to the cube itself.
    pub fn spanning_cube(camera: &Camera, bound: f64, samples: usize) -> Self {
        let dist = norm(camera.origin());
        let half_diag = 3f64.sqrt() * bound;
        let near = (dist - half_diag).max(1e-3);
        Self {
            clip_bound: Some(bound),
            ..Self::uniform(near, (dist + half_diag).max(near + 1e-3), samples)
        }
    }

    /// Depth interval of one ray, or `None` when it misses the clip cube.
    pub fn ray_range(&self, origin: Vec3, direction: Vec3) -> Option<(f64, f64)> {
        let Some(s) = self.clip_bound else {
            return Some((self.near, self.far));
        };
        let (mut lo, mut hi) = (self.near, self.far);
        for a in 0..3 {
            if direction[a] == 0.0 {
                if origin[a].abs() > s {
                    return None;
                }
                continue;
            }
            let t0 = (-s - origin[a]) / direction[a];
            let t1 = (s - origin[a]) / direction[a];
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        (lo < hi).then_some((lo, hi))
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples per ray, got {}",
                self.samples
            )));
        }
        if !(self.near < self.far) || !self.near.is_finite() || !self.far.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid depth range [{}, {}]",
                self.near, self.far
            )));
        }
        Ok(())
    }
}

/// Depths and interval lengths along one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePoints {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub positions: Vec<Vec3>,
}

/// Stratified depths in `K` equal bins over `[near, far]`: bin midpoints, or
/// one uniform draw per bin when jittered. `delta_k = t_{k+1} - t_k`, and
/// the last interval is the bin width `(far - near) / K`.
pub fn sample_along_ray(
    origin: Vec3,
    direction: Vec3,
    near: f64,
    far: f64,
    samples: usize,
    jitter: bool,
    seed: u64,
) -> Result<SamplePoints> {
    SamplingConfig {
        jitter,
        seed,
        ..SamplingConfig::uniform(near, far, samples)
    }
    .validate()?;
    let mut rng = jitter.then(|| ChaCha8Rng::seed_from_u64(seed));
    let depths = stratified_depths(near, far, samples, rng.as_mut());
    let deltas = deltas_from_depths(&depths, near, far);
    let positions = depths.iter().map(|&t| point_at(origin, direction, t)).collect();
    Ok(SamplePoints {
        depths,
        deltas,
        positions,
    })
}

fn stratified_depths(near: f64, far: f64, k: usize, mut rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    let bin = (far - near) / k as f64;
    (0..k)
        .map(|i| {
            let u = match rng.as_deref_mut() {
                Some(r) => r.gen::<f64>(),
                None => 0.5,
            };
            near + (i as f64 + u) * bin
        })
        .collect()
}

fn deltas_from_depths(depths: &[f64], near: f64, far: f64) -> Vec<f64> {
    let k = depths.len();
    let mut deltas: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    deltas.push((far - near) / k as f64);
    deltas
}

fn point_at(o: Vec3, d: Vec3, t: f64) -> Vec3 {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

/// Flattened samples for a contiguous range of rays: `points` is
/// `[rays * K, 3]`, `depths` and `deltas` are `[rays * K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub rays: usize,
    pub samples: usize,
    pub points: Vec<f64>,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Sample rays `start..end` of `batch`. Jittered draws are seeded per ray
/// from `(cfg.seed, ray index)`, so any chunking gives the same samples.
pub fn sample_rays(batch: &RayBatch, start: usize, end: usize, cfg: &SamplingConfig) -> Result<RaySamples> {
    cfg.validate()?;
    if start > end || end > batch.len() {
        return Err(Error::InvalidArgument(format!(
            "ray range {start}..{end} out of 0..{}",
            batch.len()
        )));
    }
    let k = cfg.samples;
    let n = end - start;
    let mut out = RaySamples {
        rays: n,
        samples: k,
        points: Vec::with_capacity(n * k * 3),
        depths: Vec::with_capacity(n * k),
        deltas: Vec::with_capacity(n * k),
    };
    for r in start..end {
        let (o, d) = (batch.origins[r], batch.directions[r]);
        let Some((near, far)) = cfg.ray_range(o, d) else {
            // Zero-length intervals contribute nothing.
            out.deltas.extend(std::iter::repeat(0.0).take(k));
            for _ in 0..k {
                out.points.extend(point_at(o, d, cfg.near));
                out.depths.push(cfg.near);
            }
            continue;
        };
        let depths = if cfg.jitter {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            stratified_depths(near, far, k, Some(&mut rng))
        } else {
            stratified_depths(near, far, k, None)
        };
        out.deltas.extend(deltas_from_depths(&depths, near, far));
        for &t in &depths {
            out.points.extend(point_at(o, d, t));
        }
        out.depths.extend(depths);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_and_deltas() {
        let s = sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 0.0, 1.0, 4, false, 0).unwrap();
        assert_eq!(s.depths, vec![0.125, 0.375, 0.625, 0.875]);
        for d in &s.deltas {
            assert!((d - 0.25).abs() < 1e-15);
        }
        assert_eq!(s.positions[2], [0.0, 0.0, 0.625]);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 0.0, 1.0, 1, false, 0).is_err());
        assert!(sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 1.0, 1.0, 4, false, 0).is_err());
    }

    #[test]
    fn jitter_is_seeded_and_stratified() {
        let a = sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 2.0, 4.0, 16, true, 9).unwrap();
        let b = sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 2.0, 4.0, 16, true, 9).unwrap();
        let c = sample_along_ray([0.0; 3], [0.0, 0.0, 1.0], 2.0, 4.0, 16, true, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (i, &t) in a.depths.iter().enumerate() {
            let lo = 2.0 + i as f64 * 0.125;
            assert!(t >= lo && t <= lo + 0.125);
        }
        assert!(a.deltas.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn center_ray_is_optical_axis() {
        let cam = Camera::identity(2.0);
        let rays = generate_rays(&cam, 3, 3).unwrap();
        assert_eq!(rays.directions[4], [0.0, 0.0, 1.0]);
        // Pixels to the right look toward +x, pixels below toward +y.
        assert!(rays.directions[5][0] > 0.0);
        assert!(rays.directions[7][1] > 0.0);
        for d in &rays.directions {
            assert!((norm(*d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_moves_origins_only() {
        let cam = Camera::orbit(3.0, 0.3, 0.1, 2.0).unwrap();
        let mut moved = cam;
        for r in 0..3 {
            moved.cam2world[r][3] += [0.5, -0.25, 1.0][r];
        }
        let a = generate_rays(&cam, 4, 5).unwrap();
        let b = generate_rays(&moved, 4, 5).unwrap();
        assert_eq!(a.directions, b.directions);
        for (oa, ob) in a.origins.iter().zip(&b.origins) {
            let d = [ob[0] - oa[0], ob[1] - oa[1], ob[2] - oa[2]];
            assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] + 0.25).abs() < 1e-15 && (d[2] - 1.0).abs() < 1e-15);
        }
        let unpacked = Camera::unpack(&cam.pack()).unwrap();
        assert_eq!(generate_rays(&unpacked, 4, 5).unwrap(), a);
    }

    #[test]
    fn cube_clipping() {
        let cfg = SamplingConfig {
            clip_bound: Some(1.0),
            ..SamplingConfig::uniform(0.5, 10.0, 4)
        };
        let (lo, hi) = cfg.ray_range([0.0, 0.0, -3.0], [0.0, 0.0, 1.0]).unwrap();
        assert!((lo - 2.0).abs() < 1e-15 && (hi - 4.0).abs() < 1e-15);
        assert!(cfg.ray_range([0.0, 2.0, -3.0], [0.0, 0.0, 1.0]).is_none());
        let rays = RayBatch {
            width: 2,
            height: 1,
            origins: vec![[0.0, 0.0, -3.0], [0.0, 2.0, -3.0]],
            directions: vec![[0.0, 0.0, 1.0]; 2],
        };
        let s = sample_rays(&rays, 0, 2, &cfg).unwrap();
        assert_eq!(&s.depths[..4], &[2.25, 2.75, 3.25, 3.75]);
        assert_eq!(&s.deltas[4..], &[0.0; 4]);
    }

    #[test]
    fn chunking_does_not_change_jittered_samples() {
        let cam = Camera::orbit(3.0, 0.0, 0.0, 2.0).unwrap();
        let rays = generate_rays(&cam, 4, 4).unwrap();
        let cfg = SamplingConfig {
            jitter: true,
            seed: 3,
            ..SamplingConfig::spanning_cube(&cam, 1.0, 8)
        };
        let whole = sample_rays(&rays, 0, 16, &cfg).unwrap();
        let a = sample_rays(&rays, 0, 5, &cfg).unwrap();
        let b = sample_rays(&rays, 5, 16, &cfg).unwrap();
        assert_eq!([a.depths, b.depths].concat(), whole.depths);
    }
}
