//! Synthetic multi-view videos rendered from the analytic oracle.
//!
//! On-disk layout:
//!
//! ```text
//! config.txt          key = value echo of DatasetConfig, written last
//! frames/%04d.ppm     frame with occluder
//! masks/%04d.pgm      0/255 occluder mask
//! clean/%04d.ppm      same frame without the occluder
//! frames_hr/%04d.ppm  frame at `hr_factor` times the resolution
//! cameras.csv         frame index, then 25 packed camera values
//! gt_latents.csv      frame index, then L * D latent values
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::generator::sample_latent;
use super::scene::{MixedField, OccluderField, OccluderParams, SceneParams};
use crate::config::KvReader;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::renderer::{render_field, Camera, SamplingConfig, PACKED_LEN};
use crate::tensorlab::{write_atomic, Tensor};

/// Occluder opacity above which a pixel is masked.
pub const MASK_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OccluderKind {
    None,
    Box,
    Torus,
}

impl OccluderKind {
    fn name(self) -> &'static str {
        match self {
            OccluderKind::None => "none",
            OccluderKind::Box => "box",
            OccluderKind::Torus => "torus",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OccluderKind::None),
            "box" => Ok(OccluderKind::Box),
            "torus" => Ok(OccluderKind::Torus),
            _ => Err(Error::Config(format!("occluder must be none, box or torus, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub hr_factor: usize,
    pub seed: u64,
    pub latent_rows: usize,
    pub latent_dim: usize,
    /// Amplitude of the smooth per-frame latent residual.
    pub residual_scale: f64,
    pub occluder: OccluderKind,
    pub camera_radius: f64,
    /// Total azimuth sweep in radians, centered on the `+z` axis.
    pub azimuth_span: f64,
    pub elevation: f64,
    pub focal: f64,
    pub bound: f64,
    pub oracle_samples: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            frames: 20,
            width: 64,
            height: 64,
            hr_factor: 2,
            seed: 0,
            latent_rows: 4,
            latent_dim: 16,
            residual_scale: 0.15,
            occluder: OccluderKind::Box,
            camera_radius: 3.0,
            azimuth_span: 0.8,
            elevation: 0.1,
            focal: 1.6,
            bound: 1.0,
            oracle_samples: 128,
        }
    }
}

impl DatasetConfig {
    pub fn to_text(&self) -> String {
        format!(
            "frames = {}\nwidth = {}\nheight = {}\nhr_factor = {}\nseed = {}\nlatent_rows = {}\nlatent_dim = {}\n\
             residual_scale = {:?}\noccluder = {}\ncamera_radius = {:?}\nazimuth_span = {:?}\nelevation = {:?}\n\
             focal = {:?}\nbound = {:?}\noracle_samples = {}\n",
            self.frames,
            self.width,
            self.height,
            self.hr_factor,
            self.seed,
            self.latent_rows,
            self.latent_dim,
            self.residual_scale,
            self.occluder.name(),
            self.camera_radius,
            self.azimuth_span,
            self.elevation,
            self.focal,
            self.bound,
            self.oracle_samples
        )
    }

    /// Parse a config; absent keys take their defaults, unknown keys fail.
    pub fn from_text(text: &str) -> Result<Self> {
        let d = Self::default();
        let mut r = KvReader::parse(text)?;
        let occluder = match r.take_string("occluder") {
            Some(s) => OccluderKind::parse(&s)?,
            None => d.occluder,
        };
        let cfg = Self {
            frames: r.take("frames", d.frames)?,
            width: r.take("width", d.width)?,
            height: r.take("height", d.height)?,
            hr_factor: r.take("hr_factor", d.hr_factor)?,
            seed: r.take("seed", d.seed)?,
            latent_rows: r.take("latent_rows", d.latent_rows)?,
            latent_dim: r.take("latent_dim", d.latent_dim)?,
            residual_scale: r.take("residual_scale", d.residual_scale)?,
            occluder,
            camera_radius: r.take("camera_radius", d.camera_radius)?,
            azimuth_span: r.take("azimuth_span", d.azimuth_span)?,
            elevation: r.take("elevation", d.elevation)?,
            focal: r.take("focal", d.focal)?,
            bound: r.take("bound", d.bound)?,
            oracle_samples: r.take("oracle_samples", d.oracle_samples)?,
        };
        r.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 || self.hr_factor == 0 {
            return Err(Error::Config("frames, width, height and hr_factor must be positive".into()));
        }
        if self.oracle_samples < 2 || !(self.bound > 0.0) || !(self.camera_radius > self.bound * 3f64.sqrt()) {
            return Err(Error::Config(
                "need oracle_samples >= 2, bound > 0 and the camera outside the scene cube".into(),
            ));
        }
        if self.latent_rows == 0 || self.latent_dim < super::scene::SEMANTIC_DIMS {
            return Err(Error::Config(format!(
                "latent must have at least one row and {} columns",
                super::scene::SEMANTIC_DIMS
            )));
        }
        Ok(())
    }

    /// Orbit camera of frame `t`; azimuth sweeps linearly across the span.
    pub fn camera(&self, t: usize) -> Result<Camera> {
        let az = if self.frames == 1 {
            0.0
        } else {
            self.azimuth_span * (t as f64 / (self.frames - 1) as f64 - 0.5)
        };
        Camera::orbit(self.camera_radius, az, self.elevation, self.focal)
    }

    pub fn occluder_params(&self) -> Option<OccluderParams> {
        match self.occluder {
            OccluderKind::None => None,
            OccluderKind::Box => Some(OccluderParams::default_box(self.frames)),
            OccluderKind::Torus => Some(OccluderParams::default_torus(self.frames)),
        }
    }

    pub fn oracle_sampling(&self, camera: &Camera) -> SamplingConfig {
        SamplingConfig::spanning_cube(camera, self.bound, self.oracle_samples)
    }

    /// Template plus a smooth per-frame residual: frame `t` at phase
    /// `p = 2 pi t / N` gets `residual_scale * (sin p * A + (cos p - 1) * B)`
    /// with `A`, `B` standard normal, so frame 0 is the template itself.
    pub fn latents(&self) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (l, d) = (self.latent_rows, self.latent_dim);
        let template = sample_latent(l, d, &mut rng);
        let a = Tensor::randn(&[l, d], 1.0, &mut rng);
        let b = Tensor::randn(&[l, d], 1.0, &mut rng);
        (0..self.frames)
            .map(|t| {
                let p = 2.0 * PI * t as f64 / self.frames as f64;
                let (s, c) = (p.sin(), p.cos() - 1.0);
                let data = (0..l * d)
                    .map(|i| template.data()[i] + self.residual_scale * (s * a.data()[i] + c * b.data()[i]))
                    .collect();
                Tensor::new(&[l, d], data).expect("latent shape")
            })
            .collect()
    }
}

/// One frame of a video with its mask and camera.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub image: Image,
    /// Single channel, 1 on occluder pixels and 0 elsewhere.
    pub mask: Image,
    pub camera: Camera,
    pub clean: Option<Image>,
    pub hr: Option<Image>,
}

impl FrameRecord {
    /// Number of unmasked pixels.
    pub fn unmasked_count(&self) -> usize {
        self.mask.data.iter().filter(|&&m| m < 0.5).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub config: DatasetConfig,
    pub frames: Vec<FrameRecord>,
    pub gt_latents: Vec<Tensor>,
}

fn mask_from_opacity(opacity: &Image) -> Image {
    let data = opacity
        .data
        .iter()
        .map(|&o| if o > MASK_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    Image::new(opacity.width, opacity.height, 1, data).expect("mask shape")
}

fn render_frame(cfg: &DatasetConfig, t: usize, latent: &Tensor) -> Result<FrameRecord> {
    let camera = cfg.camera(t)?;
    let sampling = cfg.oracle_sampling(&camera);
    let scene = SceneParams::decode(latent)?;
    let occluder = cfg.occluder_params().map(|o| OccluderField::new(o, t)).transpose()?;
    let mixed = MixedField { scene, occluder };
    let (w, h) = (cfg.width, cfg.height);
    let image = render_field(&mixed, &camera, w, h, &sampling)?.color;
    let clean = render_field(&scene, &camera, w, h, &sampling)?.color;
    let mask = match &occluder {
        Some(o) => mask_from_opacity(&render_field(o, &camera, w, h, &sampling)?.opacity_in),
        None => Image::filled(w, h, 1, 0.0),
    };
    let hr = render_field(&mixed, &camera, w * cfg.hr_factor, h * cfg.hr_factor, &sampling)?.color;
    Ok(FrameRecord {
        index: t,
        image: image.requantized(),
        mask,
        camera,
        clean: Some(clean.requantized()),
        hr: Some(hr.requantized()),
    })
}

/// Render a dataset in memory. Images carry exactly the values their 8-bit
/// files will hold, so a saved and reloaded bundle compares equal.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let gt_latents = cfg.latents();
    let frames = (0..cfg.frames)
        .into_par_iter()
        .map(|t| render_frame(cfg, t, &gt_latents[t]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetBundle {
        config: cfg.clone(),
        frames,
        gt_latents,
    })
}

fn fmt_row(index: usize, values: &[f64]) -> String {
    let mut s = index.to_string();
    for v in values {
        s.push_str(&format!(",{v:.16e}"));
    }
    s.push('\n');
    s
}

fn parse_rows(path: &Path, expected: usize, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: &str| Error::Format(format!("{}:{}: {msg}", path.display(), line + 1));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .map(|(n, line)| {
            let mut fields = line.split(',');
            let idx: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| bad(n, "bad frame index"))?;
            if idx != n {
                return Err(bad(n, "frame indices must run 0, 1, 2, ..."));
            }
            let vals = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(n, "bad number"))?;
            if vals.len() != width {
                return Err(bad(n, &format!("expected {width} values, got {}", vals.len())));
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;
    if rows.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} rows, got {}",
            path.display(),
            rows.len()
        )));
    }
    Ok(rows)
}

fn frame_path(dir: &Path, sub: &str, t: usize, ext: &str) -> std::path::PathBuf {
    dir.join(sub).join(format!("{t:04}.{ext}"))
}

impl DatasetBundle {
    /// Write every file, then `config.txt` last.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for sub in ["frames", "masks", "clean", "frames_hr"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        self.frames.par_iter().try_for_each(|f| -> Result<()> {
            f.image.save_pnm(&frame_path(dir, "frames", f.index, "ppm"))?;
            f.mask.save_pnm(&frame_path(dir, "masks", f.index, "pgm"))?;
            if let Some(c) = &f.clean {
                c.save_pnm(&frame_path(dir, "clean", f.index, "ppm"))?;
            }
            if let Some(h) = &f.hr {
                h.save_pnm(&frame_path(dir, "frames_hr", f.index, "ppm"))?;
            }
            Ok(())
        })?;
        let cameras: String = self.frames.iter().map(|f| fmt_row(f.index, &f.camera.pack())).collect();
        write_atomic(&dir.join("cameras.csv"), cameras.as_bytes())?;
        let latents: String = self
            .gt_latents
            .iter()
            .enumerate()
            .map(|(t, w)| fmt_row(t, w.data()))
            .collect();
        write_atomic(&dir.join("gt_latents.csv"), latents.as_bytes())?;
        write_atomic(&dir.join("config.txt"), self.config.to_text().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.txt");
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config = DatasetConfig::from_text(&text)?;
        let n = config.frames;
        let cams = parse_rows(&dir.join("cameras.csv"), n, PACKED_LEN)?;
        let (l, d) = (config.latent_rows, config.latent_dim);
        let gt_latents = parse_rows(&dir.join("gt_latents.csv"), n, l * d)?
            .into_iter()
            .map(|v| Tensor::new(&[l, d], v))
            .collect::<Result<_>>()?;
        let optional = |p: std::path::PathBuf| -> Result<Option<Image>> {
            if p.exists() {
                Image::load_pnm(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        let frames = (0..n)
            .map(|t| {
                let image = Image::load_pnm(&frame_path(dir, "frames", t, "ppm"))?;
                let mask = Image::load_pnm(&frame_path(dir, "masks", t, "pgm"))?;
                if mask.channels != 1 || mask.width != image.width || mask.height != image.height {
                    return Err(Error::Format(format!("mask {t} does not match its frame")));
                }
                if mask.data.iter().any(|&m| m != 0.0 && m != 1.0) {
                    return Err(Error::Format(format!("mask {t} is not binary 0/255")));
                }
                Ok(FrameRecord {
                    index: t,
                    image,
                    mask,
                    camera: Camera::unpack(&cams[t])?,
                    clean: optional(frame_path(dir, "clean", t, "ppm"))?,
                    hr: optional(frame_path(dir, "frames_hr", t, "ppm"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            frames,
            gt_latents,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(occluder: OccluderKind, frames: usize) -> DatasetConfig {
        DatasetConfig {
            frames,
            width: 24,
            height: 24,
            oracle_samples: 48,
            occluder,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = small(OccluderKind::Torus, 3);
        assert_eq!(DatasetConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        assert!(DatasetConfig::from_text("frames = 2\nsurprise = 1").is_err());
        assert!(DatasetConfig::from_text("frames = 0").is_err());
    }

    #[test]
    fn no_occluder_means_empty_masks() {
        let b = generate_dataset(&small(OccluderKind::None, 2)).unwrap();
        for f in &b.frames {
            assert!(f.mask.data.iter().all(|&m| m == 0.0));
            assert_eq!(Some(&f.image), f.clean.as_ref());
        }
    }

    #[test]
    fn frame_zero_latent_is_the_template() {
        let cfg = small(OccluderKind::Box, 4);
        let l = cfg.latents();
        let again = cfg.latents();
        assert_eq!(l, again);
        assert!(l[1].max_abs_diff(&l[0]) > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        assert_eq!(l[0], sample_latent(4, 16, &mut rng));
    }

    #[test]
    fn single_frame_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate_dataset(&small(OccluderKind::Box, 1)).unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(DatasetBundle::load(dir.path()).unwrap(), b);
        assert!(dir.path().join("frames/0000.ppm").exists());
    }
}
