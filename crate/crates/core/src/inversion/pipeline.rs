use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::assets::{InversionCheckpoint, OodAssets, Stage, StageLosses};
use super::config::PipelineConfig;
use super::latent::LatentCode;
use super::upsampler::{Upsampler, UPSAMPLE_FACTOR};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{
    blend_entropy, blend_sparsity, latent_delta_reg, masked_l2, sr_loss, MaskImage, PerceptualProxy,
};
use crate::renderer::{
    composite_render, generate_rays, render_composite, sample_rays, volume_render, Camera, NeuralField,
    RadianceField, RenderOutput, SamplingConfig,
};
use crate::tensorlab::{adam_step, clip_global_norm, Adam, AdamConfig, AdamState, Graph, Tensor, Var};
use crate::toygen::{DatasetBundle, Generator, GeneratorVars};
use crate::triplane::{decode_ood, sample_triplane, DecoderVars};

/// Depth sampling used for every render of a reconstruction.
pub fn sampling_for(camera: &Camera, bound: f64, samples: usize) -> SamplingConfig {
    SamplingConfig::spanning_cube(camera, bound, samples)
}

/// Composite render of frame `t`'s reconstruction from `camera`, with the
/// in-distribution field generated from `latent`.
pub fn render_reconstruction(
    generator: &Generator,
    ck: &InversionCheckpoint,
    t: usize,
    latent: &Tensor,
    camera: &Camera,
    width: usize,
    height: usize,
) -> Result<RenderOutput> {
    let planes = generator.synthesize(latent)?;
    let ood = NeuralField {
        planes: &ck.ood.planes,
        decoder: &ck.ood.decoder,
        phi: Some(ck.ood.phi.get(t)?),
    };
    let sampling = sampling_for(camera, generator.config.bound, ck.config.samples);
    render_composite(&generator.field(&planes), &ood, camera, width, height, &sampling)
}

/// Per-frame tensors that stay fixed across optimization.
#[derive(Clone, Debug)]
pub struct FrameData {
    pub index: usize,
    /// `[H, W, 3]`.
    pub target: Tensor,
    /// 1 on OOD pixels.
    pub mask: MaskImage,
    /// 1 on in-distribution pixels.
    pub keep: MaskImage,
    /// `[R * K, 3]` sample positions.
    pub points: Tensor,
    pub deltas: Vec<f64>,
    /// `[2H, 2W, 3]` full-resolution target, when the dataset has one.
    pub hr: Option<Tensor>,
}

/// Terms of the stage B objective for one frame.
#[derive(Clone, Copy, Debug)]
pub struct StageBTerms<'g> {
    pub total: Var<'g>,
    pub ood_l2: Var<'g>,
    pub composite_l2: Var<'g>,
    pub perceptual: Var<'g>,
    pub entropy: Var<'g>,
    pub sparsity: Var<'g>,
    /// `[R, K]` blend weights.
    pub blend: Var<'g>,
    /// `[H, W, 3]` composite image.
    pub image: Var<'g>,
}

/// Mean loss of every epoch of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub epoch_losses: Vec<f64>,
    /// Stage B only: per epoch, the mean over rays inside the mask of the
    /// largest blend weight along the ray.
    pub blend_inside: Vec<f64>,
    /// Stage B only: the same over rays outside the mask.
    pub blend_outside: Vec<f64>,
}

/// Running means of the per-ray peak blend weight, split by the mask.
#[derive(Default)]
struct BlendTally {
    inside: (f64, f64),
    outside: (f64, f64),
}

impl BlendTally {
    fn add(&mut self, blend: &Tensor, mask: &MaskImage, samples: usize) {
        for (ray, b) in blend.data().chunks_exact(samples).enumerate() {
            let peak = b.iter().copied().fold(0.0, f64::max);
            let slot = if mask.data[ray] > 0.0 { &mut self.inside } else { &mut self.outside };
            slot.0 += peak;
            slot.1 += 1.0;
        }
    }

    fn means(&self) -> (f64, f64) {
        let m = |(s, n): (f64, f64)| if n > 0.0 { s / n } else { f64::NAN };
        (m(self.inside), m(self.outside))
    }
}

/// The staged optimization over one dataset and frozen generator.
pub struct Pipeline<'a> {
    pub generator: &'a Generator,
    pub config: PipelineConfig,
    pub frames: Vec<FrameData>,
    pub width: usize,
    pub height: usize,
    pub cameras: Vec<Camera>,
    proxy: PerceptualProxy,
    full: MaskImage,
}

fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (stage as u64 + 1)
}

fn diverged(stage: Stage, epoch: usize, frame: usize, value: f64) -> Error {
    Error::Diverged(format!("stage {stage}, epoch {epoch}, frame {frame}: loss is {value}"))
}

fn grad_or_zero(grads: &crate::tensorlab::Gradients, v: Var<'_>) -> Tensor {
    grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape()))
}

impl<'a> Pipeline<'a> {
    pub fn new(generator: &'a Generator, data: &DatasetBundle, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let first = data
            .frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset has no frames".into()))?;
        let (width, height) = (first.image.width, first.image.height);
        if [generator.config.latent_rows, generator.config.latent_dim] != [data.config.latent_rows, data.config.latent_dim] {
            return Err(Error::Config("dataset latent shape differs from the generator's".into()));
        }
        let mut frames = Vec::with_capacity(data.frames.len());
        let mut cameras = Vec::with_capacity(data.frames.len());
        for f in &data.frames {
            if (f.image.width, f.image.height, f.image.channels) != (width, height, 3) {
                return Err(Error::Format(format!("frame {} differs in size from frame 0", f.index)));
            }
            let rays = generate_rays(&f.camera, width, height)?;
            let sampling = sampling_for(&f.camera, generator.config.bound, config.samples);
            let s = sample_rays(&rays, 0, rays.len(), &sampling)?;
            let mask = MaskImage::from_image(&f.mask)?;
            let hr = match &f.hr {
                Some(h) if (h.width, h.height) == (width * UPSAMPLE_FACTOR, height * UPSAMPLE_FACTOR) => {
                    Some(h.to_tensor())
                }
                Some(_) => return Err(Error::Format(format!("frame {} full-resolution size mismatch", f.index))),
                None => None,
            };
            frames.push(FrameData {
                index: f.index,
                target: f.image.to_tensor(),
                keep: mask.complement(),
                mask,
                points: Tensor::new(&[s.points.len() / 3, 3], s.points)?,
                deltas: s.deltas,
                hr,
            });
            cameras.push(f.camera);
        }
        Ok(Self {
            generator,
            proxy: PerceptualProxy::new(config.seed),
            full: MaskImage {
                width,
                height,
                data: vec![1.0; width * height],
            },
            config,
            frames,
            width,
            height,
            cameras,
        })
    }

    pub fn rays(&self) -> usize {
        self.width * self.height
    }

    /// Fresh checkpoint: template at the mean latent of the generator's
    /// training distribution (zero), zero residuals, normal OOD init and an
    /// identity-residual upsampler.
    pub fn init_checkpoint(&self) -> Result<InversionCheckpoint> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = self.frames.len();
        let shape = self.generator.config.latent_shape();
        Ok(InversionCheckpoint {
            config: cfg.clone(),
            generator_hash: self.generator.content_hash(),
            stage: None,
            latent: LatentCode::new(Tensor::zeros(&shape), n, cfg.strength)?,
            ood: OodAssets::init(cfg, n, self.generator.config.bound, &mut rng)?,
            upsampler: Upsampler::new(cfg.upsampler_hidden, &mut rng),
            losses: StageLosses::default(),
        })
    }

    fn order(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.frames.len()).collect();
        if self.config.shuffle {
            order.shuffle(rng);
        }
        order
    }

    fn image<'g>(&self, rgb: Var<'g>) -> Result<Var<'g>> {
        rgb.reshape(&[self.height, self.width, 3])
    }

    /// In-distribution density `[R, K]` and color `[R, K, 3]` at frame
    /// `t`'s samples, generated from latent `w`.
    pub fn in_field<'g>(&self, gen: &GeneratorVars<'g>, w: Var<'g>, t: usize) -> Result<(Var<'g>, Var<'g>)> {
        let g = w.graph();
        let f = &self.frames[t];
        let (r, k) = (self.rays(), self.config.samples);
        let planes = gen.planes(w)?;
        let out = gen.radiance(planes, g.constant(f.points.clone()))?;
        Ok((out.sigma.reshape(&[r, k])?, out.color.reshape(&[r, k, 3])?))
    }

    /// Stage A objective for frame `t` at effective latent `w`: masked L2
    /// and masked perceptual terms over unmasked pixels plus the weighted
    /// row-difference regularizer. A fully masked frame contributes only the
    /// regularizer.
    pub fn stage_a_loss<'g>(&self, gen: &GeneratorVars<'g>, w: Var<'g>, t: usize) -> Result<Var<'g>> {
        let g = w.graph();
        let f = &self.frames[t];
        let reg = latent_delta_reg(w)?.scale(self.config.lambda_delta)?;
        if f.keep.count() == 0.0 {
            return Ok(reg);
        }
        let (sigma, color) = self.in_field(gen, w, t)?;
        let img = self.image(volume_render(sigma, color, &f.deltas)?)?;
        let target = g.constant(f.target.clone());
        let l2 = masked_l2(img, target, &f.keep)?;
        let perceptual = self
            .proxy
            .loss(img, target, Some(&f.keep))?
            .scale(self.config.perceptual_weight)?;
        l2.add(perceptual)?.add(reg)
    }

    /// Stage B objective for frame `t`: the masked OOD-only reconstruction
    /// plus the composite objective (full-image L2, perceptual, entropy and
    /// outside-mask sparsity). The blend regularizers are averaged over the
    /// frame's `R * K` samples and multiplied by `reg_scale`.
    #[allow(clippy::too_many_arguments)]
    pub fn stage_b_terms<'g>(
        &self,
        t: usize,
        sigma_in: Var<'g>,
        color_in: Var<'g>,
        planes: Var<'g>,
        decoder: &DecoderVars<'g>,
        phi: Var<'g>,
        geometry: crate::triplane::PlaneGeometry,
        reg_scale: f64,
    ) -> Result<StageBTerms<'g>> {
        let g = planes.graph();
        let cfg = &self.config;
        let f = &self.frames[t];
        let (r, k) = (self.rays(), cfg.samples);
        let feats = sample_triplane(planes, geometry, g.constant(f.points.clone()))?;
        let o = decode_ood(feats, phi, decoder)?;
        let sigma_o = o.sigma.reshape(&[r, k])?;
        let color_o = o.color.reshape(&[r, k, 3])?;
        let blend = o.blend.expect("OOD head has a blend output").reshape(&[r, k])?;
        let target = g.constant(f.target.clone());
        let image = self.image(composite_render(sigma_in, color_in, sigma_o, color_o, blend, &f.deltas)?)?;
        let ood_l2 = if f.mask.count() > 0.0 {
            let ood_img = self.image(volume_render(sigma_o, color_o, &f.deltas)?)?;
            masked_l2(ood_img, target, &f.mask)?.scale(cfg.ood_weight)?
        } else {
            g.constant(Tensor::scalar(0.0))
        };
        let composite_l2 = masked_l2(image, target, &self.full)?;
        let perceptual = self.proxy.loss(image, target, None)?.scale(cfg.perceptual_weight)?;
        let n = (r * k) as f64;
        let entropy = blend_entropy(blend)?.scale(reg_scale * cfg.lambda_b / n)?;
        let sparsity = blend_sparsity(blend, &f.keep.data)?.scale(reg_scale * cfg.lambda_spar / n)?;
        let total = ood_l2.add(composite_l2)?.add(perceptual)?.add(entropy)?.add(sparsity)?;
        Ok(StageBTerms {
            total,
            ood_l2,
            composite_l2,
            perceptual,
            entropy,
            sparsity,
            blend,
            image,
        })
    }

    /// Frame `t`'s stage B objective as a function of
    /// `[w, planes, phi_t, decoder params...]`, with gradients for each.
    pub fn composite_objective(&self, t: usize, ood: &OodAssets, params: &[Tensor]) -> Result<(f64, Vec<Tensor>)> {
        let g = Graph::new();
        let gen = self.generator.bind(&g, false);
        let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
        let bound = ood.decoder.bind(&g, false);
        let n = bound.params().len();
        if vars.len() != 3 + n {
            return Err(Error::InvalidArgument(format!("expected {} parameter tensors, got {}", 3 + n, vars.len())));
        }
        let decoder = DecoderVars {
            weights: vars[3..].iter().step_by(2).copied().collect(),
            biases: vars[4..].iter().step_by(2).copied().collect(),
            ..bound
        };
        let (sigma, color) = self.in_field(&gen, vars[0], t)?;
        let terms = self.stage_b_terms(t, sigma, color, vars[1], &decoder, vars[2], ood.planes.geometry, 1.0)?;
        let grads = g.backward(terms.total)?;
        Ok((terms.total.item(), vars.iter().map(|&v| grad_or_zero(&grads, v)).collect()))
    }

    /// Parameters of [`Pipeline::composite_objective`] at the checkpoint.
    pub fn composite_params(&self, ck: &InversionCheckpoint, t: usize) -> Result<Vec<Tensor>> {
        let mut out = vec![ck.latent.effective(t)?, ck.ood.planes.planes.clone(), ck.ood.phi.get(t)?.clone()];
        out.extend(ck.ood.decoder.params().into_iter().cloned());
        Ok(out)
    }

    fn check_resume(&self, ck: &InversionCheckpoint, stage: Stage) -> Result<()> {
        if ck.generator_hash != self.generator.content_hash() {
            return Err(Error::Config("checkpoint was produced with a different generator".into()));
        }
        if ck.frames() != self.frames.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} frames, dataset has {}",
                ck.frames(),
                self.frames.len()
            )));
        }
        let ready = match stage {
            Stage::A => true,
            Stage::B => ck.stage >= Some(Stage::A),
            Stage::C => ck.stage >= Some(Stage::B),
        };
        if !ready {
            return Err(Error::InvalidArgument(format!(
                "stage {stage} needs the previous stage to be complete (checkpoint is at {})",
                ck.stage.map_or("none".to_string(), |s| s.to_string())
            )));
        }
        Ok(())
    }

    /// Run `stages` in order, updating `ck` after each.
    pub fn run(&self, ck: &mut InversionCheckpoint, stages: &[Stage]) -> Result<Vec<StageReport>> {
        stages
            .iter()
            .map(|&s| match s {
                Stage::A => self.stage_a(ck),
                Stage::B => self.stage_b(ck),
                Stage::C => self.stage_c(ck),
            })
            .collect()
    }

    /// Optimize the template and residuals; nothing else changes.
    pub fn stage_a(&self, ck: &mut InversionCheckpoint) -> Result<StageReport> {
        self.check_resume(ck, Stage::A)?;
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, Stage::A));
        let adam = AdamConfig::with_lr(cfg.lr_a);
        let shape = ck.latent.template.shape().to_vec();
        let mut template_state = AdamState::new(&shape, adam);
        let mut res_states = vec![AdamState::new(&shape, adam); self.frames.len()];
        for f in self.frames.iter().filter(|f| f.keep.count() == 0.0) {
            log::warn!("frame {}: mask covers every pixel; only the latent regularizer applies", f.index);
        }
        let mut epoch_losses = Vec::with_capacity(cfg.epochs_a);
        for epoch in 0..cfg.epochs_a {
            let mut sum = 0.0;
            for t in self.order(&mut rng) {
                let g = Graph::new();
                let gen = self.generator.bind(&g, false);
                let template = g.leaf(ck.latent.template.clone());
                let residual = g.leaf(ck.latent.residuals[t].clone());
                let w = ck.latent.effective_var(template, residual)?;
                let loss = self.stage_a_loss(&gen, w, t)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(diverged(Stage::A, epoch, t, value));
                }
                let grads = g.backward(loss)?;
                let mut gs = vec![grad_or_zero(&grads, template), grad_or_zero(&grads, residual)];
                if let Some(c) = cfg.clip_norm {
                    clip_global_norm(&mut gs, c);
                }
                adam_step(&mut ck.latent.template, &gs[0], &mut template_state, true)?;
                adam_step(&mut ck.latent.residuals[t], &gs[1], &mut res_states[t], true)?;
                sum += value;
            }
            let mean = sum / self.frames.len() as f64;
            log::info!("stage a epoch {} loss {mean:.6}", epoch + 1);
            epoch_losses.push(mean);
        }
        ck.stage = Some(Stage::A);
        ck.losses.a = epoch_losses.last().copied();
        Ok(StageReport {
            stage: Stage::A,
            epoch_losses,
            blend_inside: Vec::new(),
            blend_outside: Vec::new(),
        })
    }

    /// In-distribution density and color at every frame's samples, from the
    /// current latents. Constant during stage B.
    pub fn frozen_in_fields(&self, latent: &LatentCode) -> Result<Vec<(Tensor, Tensor)>> {
        let (r, k) = (self.rays(), self.config.samples);
        self.frames
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let planes = self.generator.synthesize(&latent.effective(t)?)?;
                let s = self.generator.field(&planes).eval(f.points.data())?;
                Ok((Tensor::new(&[r, k], s.sigma)?, Tensor::new(&[r, k, 3], s.color)?))
            })
            .collect()
    }

    /// Optimize the OOD planes, decoder and per-frame codes with latents
    /// and generator frozen.
    pub fn stage_b(&self, ck: &mut InversionCheckpoint) -> Result<StageReport> {
        self.check_resume(ck, Stage::B)?;
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, Stage::B));
        let in_fields = self.frozen_in_fields(&ck.latent)?;
        let geometry = ck.ood.planes.geometry;
        let adam = AdamConfig::with_lr(cfg.lr_b);
        let mut shared = Adam::new(
            std::iter::once(&ck.ood.planes.planes).chain(ck.ood.decoder.params()),
            adam,
        );
        let mut phi_states = vec![AdamState::new(&[cfg.phi_dim], adam); self.frames.len()];
        let mut epoch_losses = Vec::with_capacity(cfg.epochs_b);
        let mut blend_inside = Vec::with_capacity(cfg.epochs_b);
        let mut blend_outside = Vec::with_capacity(cfg.epochs_b);
        let mut ood_err = 0.0;
        for epoch in 0..cfg.epochs_b {
            let reg_scale = cfg.reg_scale(epoch);
            let mut sum = 0.0;
            let mut blend = BlendTally::default();
            ood_err = 0.0;
            for t in self.order(&mut rng) {
                let g = Graph::new();
                let planes = g.leaf(ck.ood.planes.planes.clone());
                let decoder = ck.ood.decoder.bind(&g, true);
                let phi = g.leaf(ck.ood.phi.codes[t].clone());
                let (si, ci) = (g.constant(in_fields[t].0.clone()), g.constant(in_fields[t].1.clone()));
                let terms = self.stage_b_terms(t, si, ci, planes, &decoder, phi, geometry, reg_scale)?;
                let value = terms.total.item();
                if !value.is_finite() {
                    return Err(diverged(Stage::B, epoch, t, value));
                }
                blend.add(&terms.blend.value(), &self.frames[t].mask, cfg.samples);
                ood_err += terms.ood_l2.item() / self.frames.len() as f64;
                let grads = g.backward(terms.total)?;
                let mut gs: Vec<Tensor> = std::iter::once(planes)
                    .chain(decoder.params())
                    .chain(std::iter::once(phi))
                    .map(|v| grad_or_zero(&grads, v))
                    .collect();
                if let Some(c) = cfg.clip_norm {
                    clip_global_norm(&mut gs, c);
                }
                let phi_grad = gs.pop().expect("phi gradient");
                let params: Vec<&mut Tensor> = std::iter::once(&mut ck.ood.planes.planes)
                    .chain(ck.ood.decoder.params_mut())
                    .collect();
                shared.step(params, &gs)?;
                adam_step(&mut ck.ood.phi.codes[t], &phi_grad, &mut phi_states[t], true)?;
                sum += value;
            }
            let mean = sum / self.frames.len() as f64;
            let (inside, outside) = blend.means();
            log::info!(
                "stage b epoch {} loss {mean:.6} peak blend inside {inside:.4} outside {outside:.4}",
                epoch + 1
            );
            epoch_losses.push(mean);
            blend_inside.push(inside);
            blend_outside.push(outside);
        }
        if let Some(&inside) = blend_inside.last() {
            if inside < 0.05 && ood_err > 0.02 {
                log::warn!(
                    "stage b: blend inside the mask collapsed to {inside:.4} while the masked OOD error is \
                     {ood_err:.4}; lambda_spar may be too strong"
                );
            }
        }
        ck.stage = Some(Stage::B);
        ck.losses.b = epoch_losses.last().copied();
        Ok(StageReport {
            stage: Stage::B,
            epoch_losses,
            blend_inside,
            blend_outside,
        })
    }

    /// Low-resolution composite render of every training frame.
    pub fn reconstructions(&self, ck: &InversionCheckpoint) -> Result<Vec<RenderOutput>> {
        (0..self.frames.len())
            .map(|t| {
                render_reconstruction(
                    self.generator,
                    ck,
                    t,
                    &ck.latent.effective(t)?,
                    &self.cameras[t],
                    self.width,
                    self.height,
                )
            })
            .collect()
    }

    /// Finetune the upsampler against full-resolution frames; nothing else
    /// changes.
    pub fn stage_c(&self, ck: &mut InversionCheckpoint) -> Result<StageReport> {
        self.check_resume(ck, Stage::C)?;
        let cfg = &self.config;
        let targets: Vec<&Tensor> = self
            .frames
            .iter()
            .map(|f| {
                f.hr
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("frame {} has no full-resolution image", f.index)))
            })
            .collect::<Result<_>>()?;
        let low: Vec<Tensor> = self.reconstructions(ck)?.iter().map(|r| r.color.to_tensor()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, Stage::C));
        let mut adam = Adam::new(&ck.upsampler.params, AdamConfig::with_lr(cfg.lr_c));
        let mut epoch_losses = Vec::with_capacity(cfg.epochs_c);
        for epoch in 0..cfg.epochs_c {
            let mut sum = 0.0;
            for t in self.order(&mut rng) {
                let g = Graph::new();
                let params: Vec<Var> = ck.upsampler.params.iter().map(|p| g.leaf(p.clone())).collect();
                let out = Upsampler::forward(&params, g.constant(low[t].clone()))?;
                let loss = sr_loss(out, g.constant(targets[t].clone()), &self.proxy)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(diverged(Stage::C, epoch, t, value));
                }
                let grads = g.backward(loss)?;
                let mut gs: Vec<Tensor> = params.iter().map(|&v| grad_or_zero(&grads, v)).collect();
                if let Some(c) = cfg.clip_norm {
                    clip_global_norm(&mut gs, c);
                }
                adam.step(ck.upsampler.params.iter_mut().collect(), &gs)?;
                sum += value;
            }
            let mean = sum / self.frames.len() as f64;
            log::info!("stage c epoch {} loss {mean:.6}", epoch + 1);
            epoch_losses.push(mean);
        }
        ck.stage = Some(Stage::C);
        ck.losses.c = epoch_losses.last().copied();
        Ok(StageReport {
            stage: Stage::C,
            epoch_losses,
            blend_inside: Vec::new(),
            blend_outside: Vec::new(),
        })
    }

    /// Upsampled reconstruction of frame `t` at its training camera.
    pub fn upsampled(&self, ck: &InversionCheckpoint, low: &Image) -> Result<Image> {
        ck.upsampler.apply(low)
    }
}
