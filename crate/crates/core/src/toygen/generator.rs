//! A small latent-conditioned tri-plane generator and its distillation
//! against the analytic scene family.
//!
//! A mapping MLP turns the flattened latent into per-plane coefficients of
//! a fixed quadratic basis `[1, u, v, u^2, v^2, uv]` over each plane's
//! normalized texel coordinates. Summing the three planes then spans every
//! quadratic in `(x, y, z)`, which is enough to express an ellipsoid's
//! quadratic form and a linear color ramp; the decoder `D^I` does the rest.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scene::{analytic_field, SceneParams, SIGMA_MAX};
use crate::error::{Error, Result};
use crate::renderer::NeuralField;
use crate::tensorlab::{Adam, AdamConfig, Checkpoint, Graph, Precision, Tensor, Var};
use crate::triplane::{decode_in, sample_triplane, DecoderVars, Head, HeadKind, MlpDecoder, PlaneGeometry, TriPlane};

/// Monomials per plane.
pub const BASIS_LEN: usize = 6;
/// Spread of the rows of a training latent around their shared draw.
pub const ROW_SPREAD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub latent_rows: usize,
    pub latent_dim: usize,
    pub resolution: usize,
    pub channels: usize,
    pub bound: f64,
    pub map_hidden: usize,
    pub decoder_hidden: Vec<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            latent_rows: 4,
            latent_dim: 16,
            resolution: 64,
            channels: 16,
            bound: 1.0,
            map_hidden: 128,
            decoder_hidden: vec![64, 64],
        }
    }
}

impl GeneratorConfig {
    pub fn geometry(&self) -> Result<PlaneGeometry> {
        PlaneGeometry::new(self.resolution, self.channels, self.bound)
    }

    pub fn latent_shape(&self) -> [usize; 2] {
        [self.latent_rows, self.latent_dim]
    }

    pub fn to_text(&self) -> String {
        let hidden: Vec<String> = self.decoder_hidden.iter().map(|h| h.to_string()).collect();
        format!(
            "latent_rows = {}\nlatent_dim = {}\nresolution = {}\nchannels = {}\nbound = {:?}\nmap_hidden = {}\ndecoder_hidden = {}\n",
            self.latent_rows,
            self.latent_dim,
            self.resolution,
            self.channels,
            self.bound,
            self.map_hidden,
            hidden.join(",")
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = crate::config::parse_kv(text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("generator config lacks `{k}`")));
        let int = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("generator config `{k}` is not an integer")))
        };
        let bound = get("bound")?
            .parse()
            .map_err(|_| Error::Config("generator config `bound` is not a number".into()))?;
        let decoder_hidden = get("decoder_hidden")?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config("generator config `decoder_hidden` is malformed".into()))?;
        Ok(Self {
            latent_rows: int("latent_rows")?,
            latent_dim: int("latent_dim")?,
            resolution: int("resolution")?,
            channels: int("channels")?,
            bound,
            map_hidden: int("map_hidden")?,
            decoder_hidden,
        })
    }
}

/// Draw from the generator's training distribution: one standard normal
/// vector shared by all rows plus `ROW_SPREAD` per-row noise. Its mean is
/// the zero latent.
pub fn sample_latent<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Tensor {
    let shared: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        for z in &shared {
            let e: f64 = StandardNormal.sample(rng);
            data.push(z + ROW_SPREAD * e);
        }
    }
    Tensor::new(&[rows, dim], data).expect("latent shape")
}

fn quadratic_basis(resolution: usize) -> Tensor {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (resolution - 1) as f64;
    let mut data = Vec::with_capacity(resolution * resolution * BASIS_LEN);
    for i in 0..resolution {
        for j in 0..resolution {
            let (u, v) = (coord(i), coord(j));
            data.extend([1.0, u, v, u * u, v * v, u * v]);
        }
    }
    Tensor::new(&[resolution * resolution, BASIS_LEN], data).expect("basis shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    geometry: PlaneGeometry,
    basis: Tensor,
    /// Mapping MLP, `w0, b0, w1, b1`.
    pub mapping: Vec<Tensor>,
    pub decoder: MlpDecoder,
}

/// Generator parameters bound to a graph.
pub struct GeneratorVars<'g> {
    generator: &'g Generator,
    basis: Var<'g>,
    pub mapping: Vec<Var<'g>>,
    pub decoder: DecoderVars<'g>,
}

impl<'g> GeneratorVars<'g> {
    /// `[L, D]` latent to `[3, R, R, C]` planes.
    pub fn planes(&self, latent: Var<'g>) -> Result<Var<'g>> {
        let cfg = &self.generator.config;
        if latent.shape() != cfg.latent_shape() {
            return Err(Error::Shape {
                op: "generator",
                lhs: cfg.latent_shape().to_vec(),
                rhs: latent.shape(),
            });
        }
        let c = cfg.channels;
        let x = latent.reshape(&[1, cfg.latent_rows * cfg.latent_dim])?;
        let h = x.matmul(self.mapping[0])?.add(self.mapping[1])?.softplus()?;
        let coeffs = h.matmul(self.mapping[2])?.add(self.mapping[3])?.reshape(&[3, BASIS_LEN, c])?;
        let parts = (0..3)
            .map(|p| self.basis.matmul(coeffs.slice(0, p, p + 1)?.reshape(&[BASIS_LEN, c])?))
            .collect::<Result<Vec<_>>>()?;
        let r = cfg.resolution;
        latent.graph().concat(&parts, 0)?.reshape(&[3, r, r, c])
    }

    /// In-distribution radiance at `[N, 3]` points.
    pub fn radiance(&self, planes: Var<'g>, points: Var<'g>) -> Result<crate::triplane::FieldSamples<'g>> {
        let features = sample_triplane(planes, self.generator.geometry, points)?;
        decode_in(features, &self.decoder)
    }

    pub fn params(&self) -> Vec<Var<'g>> {
        self.mapping.iter().copied().chain(self.decoder.params()).collect()
    }
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        let geometry = config.geometry()?;
        if config.latent_rows == 0 || config.latent_dim == 0 || config.map_hidden == 0 {
            return Err(Error::InvalidArgument("generator dimensions must be positive".into()));
        }
        let input = config.latent_rows * config.latent_dim;
        let out = 3 * BASIS_LEN * config.channels;
        let mapping = vec![
            Tensor::randn(&[input, config.map_hidden], (1.0 / input as f64).sqrt(), rng),
            Tensor::zeros(&[config.map_hidden]),
            Tensor::randn(&[config.map_hidden, out], (1.0 / config.map_hidden as f64).sqrt(), rng),
            Tensor::zeros(&[out]),
        ];
        let decoder = MlpDecoder::init_scaled(Head::InDistribution, config.channels, &config.decoder_hidden, rng);
        Ok(Self {
            basis: quadratic_basis(config.resolution),
            geometry,
            config,
            mapping,
            decoder,
        })
    }

    pub fn geometry(&self) -> PlaneGeometry {
        self.geometry
    }

    pub fn bind<'g>(&'g self, g: &'g Graph, trainable: bool) -> GeneratorVars<'g> {
        GeneratorVars {
            generator: self,
            basis: g.constant(self.basis.clone()),
            mapping: self.mapping.iter().map(|t| g.input(t.clone(), trainable)).collect(),
            decoder: self.decoder.bind(g, trainable),
        }
    }

    /// Planes for a latent, outside any optimization.
    pub fn synthesize(&self, latent: &Tensor) -> Result<TriPlane> {
        let g = Graph::new();
        let vars = self.bind(&g, false);
        let planes = vars.planes(g.constant(latent.clone()))?;
        let t = (*planes.value()).clone();
        TriPlane::from_tensor(self.geometry, t)
    }

    pub fn field<'a>(&'a self, planes: &'a TriPlane) -> NeuralField<'a> {
        NeuralField {
            planes,
            decoder: &self.decoder,
            phi: None,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.mapping.iter().chain(self.decoder.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mapping.iter_mut().chain(self.decoder.params_mut()).collect()
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint, precision: Precision) {
        ck.insert_text("generator.config", &self.config.to_text());
        for (l, pair) in self.mapping.chunks(2).enumerate() {
            ck.insert_tensor(format!("generator.map.w{l}"), &pair[0], precision);
            ck.insert_tensor(format!("generator.map.b{l}"), &pair[1], precision);
        }
        self.decoder.write_checkpoint(ck, "decoder_in", precision);
    }

    pub fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = GeneratorConfig::from_text(&ck.text("generator.config")?)?;
        let mut mapping = Vec::with_capacity(4);
        for l in 0..2 {
            mapping.push(ck.tensor(&format!("generator.map.w{l}"))?);
            mapping.push(ck.tensor(&format!("generator.map.b{l}"))?);
        }
        let input = config.latent_rows * config.latent_dim;
        let out = 3 * BASIS_LEN * config.channels;
        let expected = [
            vec![input, config.map_hidden],
            vec![config.map_hidden],
            vec![config.map_hidden, out],
            vec![out],
        ];
        for (t, e) in mapping.iter().zip(&expected) {
            if t.shape() != e.as_slice() {
                return Err(Error::Format(format!(
                    "generator mapping tensor has shape {:?}, expected {e:?}",
                    t.shape()
                )));
            }
        }
        let decoder = MlpDecoder::read_checkpoint(ck, "decoder_in", HeadKind::InDistribution)?;
        if decoder.feature_channels() != config.channels {
            return Err(Error::Format("decoder_in width does not match generator channels".into()));
        }
        Ok(Self {
            geometry: config.geometry()?,
            basis: quadratic_basis(config.resolution),
            config,
            mapping,
            decoder,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        self.write_checkpoint(&mut ck, Precision::F64);
        ck
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_checkpoint(&Checkpoint::load(path)?)
    }

    /// Content hash of the serialized generator.
    pub fn content_hash(&self) -> String {
        self.to_checkpoint().content_hash()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub seed: u64,
    pub steps: usize,
    /// Latents per step.
    pub batch: usize,
    /// Points per latent per step; half uniform in the cube, half near the
    /// ellipsoid surface.
    pub points: usize,
    pub lr: f64,
    /// Steps per loss window for progress and divergence checks.
    pub window: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 3000,
            batch: 4,
            points: 1024,
            lr: 2e-3,
            window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Mean loss over each completed window.
    pub window_losses: Vec<f64>,
}

impl PretrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.window_losses.last().copied()
    }
}

fn distillation_points<R: Rng + ?Sized>(scene: &SceneParams, n: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    let mut pts = Vec::with_capacity(n * 3);
    for i in 0..n {
        if i % 2 == 0 {
            pts.extend((0..3).map(|_| rng.gen_range(-bound..bound)));
        } else {
            let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
            let rho: f64 = rng.gen_range(0.7..1.3);
            pts.extend((0..3).map(|k| (scene.center[k] + rho * scene.radii[k] * d[k] / len).clamp(-bound, bound)));
        }
    }
    pts
}

/// Distillation loss on one batch of points:
/// `mean((sigma_hat - sigma)^2) / SIGMA_MAX^2 + mean((sigma / SIGMA_MAX) |c_hat - c|^2) / 3`.
fn distillation_loss<'g>(vars: &GeneratorVars<'g>, latent: &Tensor, points: Vec<f64>) -> Result<Var<'g>> {
    let g = vars.basis.graph();
    let scene = SceneParams::decode(latent)?;
    let n = points.len() / 3;
    let mut sigma = Vec::with_capacity(n);
    let mut color = Vec::with_capacity(n * 3);
    for p in points.chunks_exact(3) {
        let (c, s) = analytic_field(&scene, [p[0], p[1], p[2]]);
        sigma.push(s);
        color.extend(c);
    }
    let weight = g.constant(Tensor::new(&[n, 1], sigma.iter().map(|s| s / SIGMA_MAX).collect())?);
    let planes = vars.planes(g.constant(latent.clone()))?;
    let out = vars.radiance(planes, g.constant(Tensor::new(&[n, 3], points)?))?;
    let d_sigma = out
        .sigma
        .sub(g.constant(Tensor::new(&[n], sigma)?))?
        .square()?
        .mean()?
        .scale(1.0 / (SIGMA_MAX * SIGMA_MAX))?;
    let d_color = out
        .color
        .sub(g.constant(Tensor::new(&[n, 3], color)?))?
        .square()?
        .mul(weight)?
        .mean()?;
    d_sigma.add(d_color)
}

/// Fit a fresh generator to the analytic scene family.
///
/// Fails with [`Error::Diverged`] on a non-finite loss or when a window's
/// mean loss exceeds twice the best window so far.
pub fn pretrain_generator(config: GeneratorConfig, train: &PretrainConfig) -> Result<(Generator, PretrainReport)> {
    if train.steps == 0 || train.batch == 0 || train.points < 2 || train.window == 0 {
        return Err(Error::InvalidArgument("pretraining needs positive steps, batch, points and window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut gen = Generator::new(config, &mut rng)?;
    let mut adam = Adam::new(gen.params(), AdamConfig::with_lr(train.lr));
    let mut report = PretrainReport {
        window_losses: Vec::new(),
    };
    let (rows, dim, bound) = (gen.config.latent_rows, gen.config.latent_dim, gen.config.bound);
    let mut window_sum = 0.0;
    for step in 0..train.steps {
        // Step decay over the final third.
        let lr = if step * 3 >= train.steps * 2 { train.lr * 0.2 } else { train.lr };
        adam.states.iter_mut().for_each(|s| s.config.lr = lr);
        let g = Graph::new();
        let vars = gen.bind(&g, true);
        let mut total: Option<Var> = None;
        for _ in 0..train.batch {
            let latent = sample_latent(rows, dim, &mut rng);
            let scene = SceneParams::decode(&latent)?;
            let pts = distillation_points(&scene, train.points, bound, &mut rng);
            let l = distillation_loss(&vars, &latent, pts)?;
            total = Some(match total {
                None => l,
                Some(t) => t.add(l)?,
            });
        }
        let loss = total.expect("batch >= 1").scale(1.0 / train.batch as f64)?;
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::Diverged(format!("pretraining loss is {value} at step {step}")));
        }
        let grads = g.backward(loss)?;
        let grads: Vec<Tensor> = vars
            .params()
            .into_iter()
            .map(|v| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect();
        adam.step(gen.params_mut(), &grads)?;
        window_sum += value;
        if (step + 1) % train.window == 0 {
            let mean = window_sum / train.window as f64;
            window_sum = 0.0;
            let best = report.window_losses.iter().copied().fold(f64::INFINITY, f64::min);
            report.window_losses.push(mean);
            log::info!("pretrain step {} loss {mean:.6}", step + 1);
            if mean > 2.0 * best {
                return Err(Error::Diverged(format!(
                    "pretraining window loss {mean:.6} at step {} exceeds twice the best {best:.6}",
                    step + 1
                )));
            }
        }
    }
    Ok((gen, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorlab::finite_diff_check;

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            latent_rows: 2,
            latent_dim: 10,
            resolution: 8,
            channels: 3,
            bound: 1.0,
            map_hidden: 8,
            decoder_hidden: vec![6],
        }
    }

    #[test]
    fn basis_spans_plane_quadratics() {
        let b = quadratic_basis(5);
        // Texel (i=4, j=2) sits at u=1, v=0.
        let row = &b.data()[(4 * 5 + 2) * BASIS_LEN..(4 * 5 + 3) * BASIS_LEN];
        assert_eq!(row, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn latent_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gen = Generator::new(tiny(), &mut rng).unwrap();
        let latent = sample_latent(2, 10, &mut rng);
        let pts = Tensor::new(&[5, 3], (0..15).map(|i| (i as f64 * 0.37).sin() * 0.9).collect()).unwrap();
        let loss = |p: &[Tensor]| {
            let g = Graph::new();
            let vars = gen.bind(&g, false);
            let w = g.leaf(p[0].clone());
            let planes = vars.planes(w)?;
            let out = vars.radiance(planes, g.constant(pts.clone()))?;
            let l = out.sigma.sum()?.add(out.color.square()?.sum()?)?;
            let grads = g.backward(l)?;
            Ok((l.item(), vec![grads.get(w).unwrap().clone()]))
        };
        let report = finite_diff_check(loss, &[latent], 1e-5, 20, 1).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gen = Generator::new(tiny(), &mut rng).unwrap();
        let back = Generator::read_checkpoint(&Checkpoint::from_bytes(&gen.to_checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, gen);
        assert_eq!(back.content_hash(), gen.content_hash());
    }

    #[test]
    fn pretraining_reduces_loss_and_is_deterministic() {
        let train = PretrainConfig {
            steps: 60,
            batch: 2,
            points: 64,
            window: 20,
            lr: 3e-3,
            ..PretrainConfig::default()
        };
        let cfg = GeneratorConfig {
            resolution: 8,
            channels: 4,
            map_hidden: 16,
            decoder_hidden: vec![8],
            ..GeneratorConfig::default()
        };
        let (a, ra) = pretrain_generator(cfg.clone(), &train).unwrap();
        let (b, rb) = pretrain_generator(cfg, &train).unwrap();
        assert_eq!(a.to_checkpoint().to_bytes(), b.to_checkpoint().to_bytes());
        assert_eq!(ra, rb);
        assert!(ra.window_losses[2] < ra.window_losses[0], "{:?}", ra.window_losses);
    }

    #[test]
    fn training_latents_center_on_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4000;
        let mut mean = 0.0;
        for _ in 0..n {
            mean += sample_latent(4, 16, &mut rng).sum() / 64.0;
        }
        assert!((mean / n as f64).abs() < 0.05);
    }
}
