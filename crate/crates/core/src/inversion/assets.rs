use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use super::config::PipelineConfig;
use super::latent::LatentCode;
use super::upsampler::Upsampler;
use crate::error::{Error, Result};
use crate::tensorlab::{sha256_hex, Checkpoint, Precision};
use crate::triplane::{Head, HeadKind, MlpDecoder, OodLatents, PlaneGeometry, TriPlane};

/// Optimization stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// In-distribution latent inversion.
    A,
    /// OOD field and composite fit.
    B,
    /// Upsampler finetuning.
    C,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::A, Stage::B, Stage::C];

    pub fn next(self) -> Option<Stage> {
        match self {
            Stage::A => Some(Stage::B),
            Stage::B => Some(Stage::C),
            Stage::C => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::A => "a",
            Stage::B => "b",
            Stage::C => "c",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Stage::A),
            "b" => Ok(Stage::B),
            "c" => Ok(Stage::C),
            _ => Err(Error::InvalidArgument(format!("stage must be a, b or c, got `{s}`"))),
        }
    }
}

/// The free out-of-distribution field: planes, decoder and per-frame codes.
#[derive(Clone, Debug, PartialEq)]
pub struct OodAssets {
    pub planes: TriPlane,
    pub decoder: MlpDecoder,
    pub phi: OodLatents,
}

impl OodAssets {
    /// Normal initialization: `init_std` for planes and decoder, `phi_std`
    /// for the per-frame codes.
    pub fn init<R: Rng + ?Sized>(cfg: &PipelineConfig, frames: usize, bound: f64, rng: &mut R) -> Result<Self> {
        let geometry = PlaneGeometry::new(cfg.ood_resolution, cfg.ood_channels, bound)?;
        let planes = TriPlane::randn(geometry, cfg.init_std, rng);
        let head = Head::OutOfDistribution {
            latent_dim: cfg.phi_dim,
        };
        let decoder = MlpDecoder::randn(head, cfg.ood_channels, &cfg.ood_hidden, cfg.init_std, rng);
        let phi = OodLatents::randn(frames, cfg.phi_dim, cfg.phi_std, rng);
        Ok(Self { planes, decoder, phi })
    }
}

/// Final mean epoch loss of each completed stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageLosses {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

/// Everything an inversion produces, plus what is needed to resume it.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionCheckpoint {
    pub config: PipelineConfig,
    /// Content hash of the frozen generator the run used.
    pub generator_hash: String,
    /// Last completed stage.
    pub stage: Option<Stage>,
    pub latent: LatentCode,
    pub ood: OodAssets,
    pub upsampler: Upsampler,
    pub losses: StageLosses,
}

/// Hashes of the parameter groups each stage is allowed to change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupHashes {
    pub latent: String,
    pub ood: String,
    pub upsampler: String,
}

impl InversionCheckpoint {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert_text("config", &self.config.to_text());
        ck.insert_text("generator.hash", &self.generator_hash);
        ck.insert_text("stage", &self.stage.map_or("none".to_string(), |s| s.to_string()));
        let losses = format!(
            "a = {}\nb = {}\nc = {}\n",
            fmt_opt(self.losses.a),
            fmt_opt(self.losses.b),
            fmt_opt(self.losses.c)
        );
        ck.insert_text("losses", &losses);
        self.write_groups(&mut ck);
        ck
    }

    fn write_groups(&self, ck: &mut Checkpoint) {
        self.latent.write_checkpoint(ck, Precision::F64);
        self.ood.planes.write_checkpoint(ck, "triplane", Precision::F64);
        self.ood.decoder.write_checkpoint(ck, "decoder_ood", Precision::F64);
        self.ood.phi.write_checkpoint(ck, Precision::F64);
        self.upsampler.write_checkpoint(ck, Precision::F64);
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = PipelineConfig::from_text(&ck.text("config")?)?;
        let stage = match ck.text("stage")?.as_str() {
            "none" => None,
            s => Some(s.parse()?),
        };
        let kv = crate::config::parse_kv(&ck.text("losses")?)?;
        let loss = |k: &str| -> Result<Option<f64>> {
            match kv.get(k).map(String::as_str) {
                None | Some("none") => Ok(None),
                Some(v) => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("stage loss `{k}` is not a number"))),
            }
        };
        let losses = StageLosses {
            a: loss("a")?,
            b: loss("b")?,
            c: loss("c")?,
        };
        let out = Self {
            generator_hash: ck.text("generator.hash")?,
            stage,
            latent: LatentCode::read_checkpoint(ck)?,
            ood: OodAssets {
                planes: TriPlane::read_checkpoint(ck, "triplane")?,
                decoder: MlpDecoder::read_checkpoint(ck, "decoder_ood", HeadKind::OutOfDistribution)?,
                phi: OodLatents::read_checkpoint(ck)?,
            },
            upsampler: Upsampler::read_checkpoint(ck)?,
            losses,
            config,
        };
        if out.ood.phi.codes.len() != out.latent.frames() {
            return Err(Error::Format("phi and latent residual counts differ".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn frames(&self) -> usize {
        self.latent.frames()
    }

    pub fn group_hashes(&self) -> GroupHashes {
        let hash = |f: &dyn Fn(&mut Checkpoint)| {
            let mut ck = Checkpoint::new();
            f(&mut ck);
            sha256_hex(&ck.to_bytes())
        };
        GroupHashes {
            latent: hash(&|ck| self.latent.write_checkpoint(ck, Precision::F64)),
            ood: hash(&|ck| {
                self.ood.planes.write_checkpoint(ck, "triplane", Precision::F64);
                self.ood.decoder.write_checkpoint(ck, "decoder_ood", Precision::F64);
                self.ood.phi.write_checkpoint(ck, Precision::F64);
            }),
            upsampler: hash(&|ck| self.upsampler.write_checkpoint(ck, Precision::F64)),
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".to_string(), |x| format!("{x:?}"))
}
